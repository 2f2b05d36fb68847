#include "mash/tokens.hpp"

namespace mash {

char type_letter(TokenType t) {
  switch (t) {
    case TokenType::temporal:
      return 't';
    case TokenType::spatial:
      return 's';
    case TokenType::text:
      return 'x';
  }
  return '?';
}

void FrameEmbeddings::validate() const {
  if (frames < 1) throw ValidationError("frame embeddings: need at least one frame");
  if (frames % kSpatialSegments != 0) {
    throw ValidationError("frame embeddings: frame count " + std::to_string(frames) +
                          " is not divisible by " + std::to_string(kSpatialSegments));
  }
  if (grid_h < 2 || grid_w < 2 || grid_h % 2 != 0 || grid_w % 2 != 0) {
    throw ValidationError("frame embeddings: patch grid " + std::to_string(grid_h) + "x" +
                          std::to_string(grid_w) + " must be even and at least 2x2");
  }
  if (patches.rows() != Eigen::Index{frames} * patches_per_frame()) {
    throw ShapeError("frame embeddings: " + std::to_string(patches.rows()) +
                     " patch rows for " + std::to_string(frames) + " frames of " +
                     std::to_string(patches_per_frame()) + " patches");
  }
  if (cls.rows() != frames || cls.cols() != patches.cols()) {
    throw ShapeError("frame embeddings: cls block " + shape_string(cls) + " for width " +
                     std::to_string(patches.cols()));
  }
  if (!patches.allFinite() || !cls.allFinite()) {
    throw ValidationError("frame embeddings: non-finite entry");
  }
}

namespace {

// Mean of the rows of `block`, summed top to bottom.
Mat row_mean(const Mat& block) {
  Mat acc = Mat::Zero(1, block.cols());
  for (Eigen::Index i = 0; i < block.rows(); ++i) acc.row(0) += block.row(i);
  return acc / static_cast<double>(block.rows());
}

}  // namespace

Mat build_spatial_tokens(const FrameEmbeddings& fe) {
  fe.validate();
  const int per_segment = fe.frames / kSpatialSegments;
  const int h = fe.grid_h, w = fe.grid_w, n = fe.patches_per_frame();
  const Eigen::Index width = fe.width();
  Mat out(n, width);
  Eigen::Index row = 0;
  for (int s = 0; s < kSpatialSegments; ++s) {
    Mat pooled = Mat::Zero(n, width);
    for (int t = s * per_segment; t < (s + 1) * per_segment; ++t) pooled += fe.frame(t);
    pooled /= static_cast<double>(per_segment);
    for (int r = 0; r < h; r += 2) {
      for (int c = 0; c < w; c += 2) {
        Mat cell = pooled.row(r * w + c) + pooled.row(r * w + c + 1);
        cell += pooled.row((r + 1) * w + c);
        cell += pooled.row((r + 1) * w + c + 1);
        out.row(row++) = cell / 4.0;
      }
    }
  }
  return out;
}

Mat build_temporal_tokens(const FrameEmbeddings& fe) {
  fe.validate();
  const int frames = fe.frames;
  Mat out(3 * frames - 1, fe.width());
  out.topRows(frames) = fe.cls;
  for (int t = 0; t < frames; ++t) out.row(frames + t) = row_mean(fe.frame(t));
  for (int t = 0; t + 1 < frames; ++t) {
    out.row(2 * frames + t) = row_mean(fe.frame(t + 1) - fe.frame(t));
  }
  return out;
}

SequenceLayout make_layout(std::int64_t temporal, std::int64_t spatial, std::int64_t text,
                           bool require_balanced) {
  if (temporal < 1) throw ValidationError("sequence: a temporal token stream is required");
  if (text < 0) throw ValidationError("sequence: negative text length");
  if (temporal > spatial && require_balanced) {
    throw ValidationError("sequence: balanced position ids need N >= M (N=" +
                          std::to_string(spatial) + ", M=" + std::to_string(temporal) + ")");
  }
  SequenceLayout layout{temporal, spatial, text, {}, {}};
  layout.ids = temporal > spatial ? PositionIds{distinct_ids(spatial, temporal, text), {}}
                                  : position_ids(spatial, temporal, text);
  layout.tags.reserve(static_cast<std::size_t>(layout.size()));
  layout.tags.insert(layout.tags.end(), static_cast<std::size_t>(temporal), TokenType::temporal);
  layout.tags.insert(layout.tags.end(), static_cast<std::size_t>(spatial), TokenType::spatial);
  layout.tags.insert(layout.tags.end(), static_cast<std::size_t>(text), TokenType::text);
  return layout;
}

TokenSequence assemble_sequence(const Mat& temporal, const Mat& spatial, const Mat& text) {
  if (temporal.cols() != spatial.cols() || (text.rows() > 0 && text.cols() != spatial.cols())) {
    throw ShapeError("assemble_sequence: widths " + std::to_string(temporal.cols()) + ", " +
                     std::to_string(spatial.cols()) + ", " + std::to_string(text.cols()));
  }
  TokenSequence seq;
  seq.layout = make_layout(temporal.rows(), spatial.rows(), text.rows());
  seq.tokens.resize(seq.layout.size(), spatial.cols());
  seq.tokens.topRows(temporal.rows()) = temporal;
  seq.tokens.middleRows(temporal.rows(), spatial.rows()) = spatial;
  if (text.rows() > 0) seq.tokens.bottomRows(text.rows()) = text;
  return seq;
}

}  // namespace mash
