#pragma once

#include "mash/numerics.hpp"
#include "mash/positional.hpp"
#include "mash/tape.hpp"
#include "mash/tokens.hpp"

#include <span>
#include <string_view>
#include <vector>

namespace mash {

enum class MaskMode { full_causal, dst };
enum class Direction { causal, bidirectional };

std::string_view to_string(MaskMode m);
std::string_view to_string(Direction d);
MaskMode parse_mask_mode(std::string_view s);
Direction parse_direction(std::string_view s);

/// Switches covering the attention-type, disentanglement and positional
/// ablations. Defaults are the full method (DST mask + harmonic RoPE).
struct AttentionConfig {
  int heads = 4;
  int head_dim = 8;
  MaskMode mask_mode = MaskMode::dst;
  Direction temporal_attn = Direction::causal;
  Direction spatial_attn = Direction::bidirectional;
  bool disentangle = true;
  RopeScheme rope_scheme = RopeScheme::harmonic;
  double rope_base = 10000.0;

  int width() const { return heads * head_dim; }
  RopeConfig rope() const { return RopeConfig{head_dim, rope_base}; }
  void validate() const;
};

/// Additive S x S mask with entries 0 (allowed) or -inf (blocked).
struct DstMask {
  Mat entries;
  MaskMode mode = MaskMode::dst;
  bool disentangled = false;

  Eigen::Index size() const { return entries.rows(); }
  bool allowed(Eigen::Index i, Eigen::Index j) const { return entries(i, j) == 0.0; }
};

/// -inf wherever two visual tokens have different types; 0 elsewhere.
/// Only the visual (temporal/spatial) prefix of `tags` is covered.
Mat disentangling_mask(std::span<const TokenType> tags);

/// Causal or bidirectional attention inside the temporal and spatial groups.
/// Cross-type entries are left at 0.
Mat structured_st_mask(std::span<const TokenType> tags, const AttentionConfig& cfg);

/// Complete mask for a [temporal, spatial, text] sequence.
DstMask full_dst_mask(std::span<const TokenType> tags, const AttentionConfig& cfg);

struct AttentionResult {
  Var output;               // S x width
  std::vector<Mat> probs;   // one S x S matrix per head
};

/// Multi-head attention with per-head RoPE on Q and K, scaled dot products,
/// the additive mask and a row softmax. Heads are concatenated.
AttentionResult attend(Var q, Var k, Var v, const DstMask& mask, const PositionIds& ids,
                       const AttentionConfig& cfg);

}  // namespace mash
