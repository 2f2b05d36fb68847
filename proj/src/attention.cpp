#include "mash/attention.hpp"

#include <cmath>
#include <string>

namespace mash {

std::string_view to_string(MaskMode m) {
  return m == MaskMode::dst ? "dst" : "full_causal";
}

std::string_view to_string(Direction d) {
  return d == Direction::causal ? "causal" : "bidirectional";
}

MaskMode parse_mask_mode(std::string_view s) {
  if (s == "dst") return MaskMode::dst;
  if (s == "full_causal") return MaskMode::full_causal;
  throw ValidationError("unknown mask mode '" + std::string(s) + "'");
}

Direction parse_direction(std::string_view s) {
  if (s == "causal") return Direction::causal;
  if (s == "bidirectional") return Direction::bidirectional;
  throw ValidationError("unknown attention direction '" + std::string(s) + "'");
}

void AttentionConfig::validate() const {
  if (heads < 1) throw ValidationError("attention: heads must be >= 1");
  rope().validate();
}

namespace {

Eigen::Index visual_prefix(std::span<const TokenType> tags) {
  Eigen::Index n = 0;
  while (n < static_cast<Eigen::Index>(tags.size()) && tags[static_cast<std::size_t>(n)] != TokenType::text) ++n;
  return n;
}

void check_layout(std::span<const TokenType> tags) {
  // temporal* spatial* text*
  int stage = 0;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const int s = static_cast<int>(tags[i]);
    if (s < stage) {
      throw ValidationError("mask: token " + std::to_string(i) +
                            " breaks the [temporal, spatial, text] layout");
    }
    stage = s;
  }
}

}  // namespace

Mat disentangling_mask(std::span<const TokenType> tags) {
  const Eigen::Index n = visual_prefix(tags);
  Mat m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (tags[static_cast<std::size_t>(i)] != tags[static_cast<std::size_t>(j)]) {
        m(i, j) = neg_inf<double>();
      }
    }
  }
  return m;
}

Mat structured_st_mask(std::span<const TokenType> tags, const AttentionConfig& cfg) {
  const Eigen::Index n = visual_prefix(tags);
  Mat m = Mat::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const TokenType a = tags[static_cast<std::size_t>(i)];
      if (a != tags[static_cast<std::size_t>(j)]) continue;
      const Direction d = a == TokenType::temporal ? cfg.temporal_attn : cfg.spatial_attn;
      if (d == Direction::causal) m(i, j) = neg_inf<double>();
    }
  }
  return m;
}

DstMask full_dst_mask(std::span<const TokenType> tags, const AttentionConfig& cfg) {
  check_layout(tags);
  const auto s = static_cast<Eigen::Index>(tags.size());
  DstMask out{Mat::Zero(s, s), cfg.mask_mode, false};
  if (cfg.mask_mode == MaskMode::full_causal) {
    for (Eigen::Index i = 0; i < s; ++i) {
      for (Eigen::Index j = i + 1; j < s; ++j) out.entries(i, j) = neg_inf<double>();
    }
    return out;
  }

  const Eigen::Index visual = visual_prefix(tags);
  Mat block = structured_st_mask(tags, cfg);
  if (cfg.disentangle) {
    block += disentangling_mask(tags);
    out.disentangled = true;
  } else {
    // Without the disentangling term, cross-type visual pairs fall back to
    // ordinary index-causal attention.
    for (Eigen::Index i = 0; i < visual; ++i) {
      for (Eigen::Index j = i + 1; j < visual; ++j) {
        if (tags[static_cast<std::size_t>(i)] != tags[static_cast<std::size_t>(j)]) {
          block(i, j) = neg_inf<double>();
        }
      }
    }
  }
  out.entries.topLeftCorner(visual, visual) = block;
  // Visual rows never see text; text rows see all visual tokens and earlier text.
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = visual; j < s; ++j) {
      if (i < visual || j > i) out.entries(i, j) = neg_inf<double>();
    }
  }
  return out;
}

AttentionResult attend(Var q, Var k, Var v, const DstMask& mask, const PositionIds& ids,
                       const AttentionConfig& cfg) {
  cfg.validate();
  const Eigen::Index width = cfg.width();
  for (const Var* x : {&q, &k, &v}) {
    if (x->cols() != width) {
      throw ShapeError("attend: input " + shape_string(x->value()) + " for " +
                       std::to_string(cfg.heads) + " heads of " + std::to_string(cfg.head_dim));
    }
  }
  if (q.rows() != mask.size() || k.rows() != mask.size() || v.rows() != mask.size() ||
      static_cast<Eigen::Index>(ids.size()) != mask.size()) {
    throw ShapeError("attend: sequence length mismatch against a mask of size " +
                     std::to_string(mask.size()));
  }
  const RotationTable table = RotationTable::build(ids, cfg.rope(), cfg.rope_scheme);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cfg.head_dim));

  AttentionResult result;
  std::vector<Var> heads;
  heads.reserve(static_cast<std::size_t>(cfg.heads));
  for (int h = 0; h < cfg.heads; ++h) {
    const Eigen::Index first = Eigen::Index{h} * cfg.head_dim;
    Var qh = rope(slice_cols(q, first, cfg.head_dim), table);
    Var kh = rope(slice_cols(k, first, cfg.head_dim), table);
    Var vh = slice_cols(v, first, cfg.head_dim);
    Var scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    Var probs = softmax_masked(scores, mask.entries);
    result.probs.push_back(probs.value());
    heads.push_back(matmul(probs, vh));
  }
  result.output = cfg.heads == 1 ? heads.front() : concat_cols(heads);
  return result;
}

}  // namespace mash
