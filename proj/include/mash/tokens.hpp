#pragma once

#include "mash/numerics.hpp"
#include "mash/positional.hpp"

#include <cstdint>
#include <vector>

namespace mash {

/// Temporal segments pooled into spatial tokens.
inline constexpr int kSpatialSegments = 4;

enum class TokenType : std::uint8_t { temporal, spatial, text };

char type_letter(TokenType t);

/// Per-frame encoder output. Patch tokens are stored frame-major: row
/// t * (h * w) + r * w + c holds patch (r, c) of frame t.
struct FrameEmbeddings {
  int frames = 0;
  int grid_h = 0;
  int grid_w = 0;
  Mat patches;  // (frames * grid_h * grid_w) x width
  Mat cls;      // frames x width

  int patches_per_frame() const { return grid_h * grid_w; }
  Eigen::Index width() const { return patches.cols(); }
  auto frame(int t) const { return patches.middleRows(Eigen::Index{t} * patches_per_frame(), patches_per_frame()); }

  void validate() const;
};

/// N = h*w tokens: four segments pooled over time, then 2x2 average pooled,
/// concatenated segment-major with each pooled map flattened row-major.
Mat build_spatial_tokens(const FrameEmbeddings& fe);

/// M = 3T-1 tokens: [CLS_1..CLS_T | pool_1..pool_T | diff_1..diff_{T-1}] where
/// pool_t is the spatial mean of frame t and diff_t the spatial mean of
/// frame_{t+1} - frame_t.
Mat build_temporal_tokens(const FrameEmbeddings& fe);

struct SequenceLayout {
  std::int64_t temporal = 0;  // M
  std::int64_t spatial = 0;   // N
  std::int64_t text = 0;      // L
  std::vector<TokenType> tags;
  PositionIds ids;

  std::int64_t size() const { return temporal + spatial + text; }
  std::int64_t visual() const { return temporal + spatial; }
};

/// Tags and both position tracks for [temporal x M, spatial x N, text x L].
/// With `require_balanced` off, M > N is accepted and the balanced track is
/// left empty (only valid for distinct-id rotation).
SequenceLayout make_layout(std::int64_t temporal, std::int64_t spatial, std::int64_t text,
                           bool require_balanced = true);

struct TokenSequence {
  Mat tokens;
  SequenceLayout layout;
};

TokenSequence assemble_sequence(const Mat& temporal, const Mat& spatial, const Mat& text);

}  // namespace mash
