#include "mash/positional.hpp"

#include <memory>

namespace mash {

void RopeConfig::validate() const {
  if (head_dim < 2 || head_dim % 2 != 0) {
    throw ValidationError("rope: head_dim must be even and >= 2, got " + std::to_string(head_dim));
  }
  if (!(base > 1.0)) throw ValidationError("rope: base must exceed 1");
}

std::string_view to_string(RopeScheme s) {
  switch (s) {
    case RopeScheme::distinct:
      return "distinct";
    case RopeScheme::balanced:
      return "balanced";
    case RopeScheme::harmonic:
      return "harmonic";
  }
  return "distinct";
}

RopeScheme parse_rope_scheme(std::string_view s) {
  if (s == "distinct") return RopeScheme::distinct;
  if (s == "balanced") return RopeScheme::balanced;
  if (s == "harmonic") return RopeScheme::harmonic;
  throw ValidationError("unknown rope scheme '" + std::string(s) + "'");
}

double theta(int k, const RopeConfig& cfg) {
  cfg.validate();
  if (k < 0 || k >= cfg.head_dim / 2) {
    throw ValidationError("theta: pair index " + std::to_string(k) + " outside [0, " +
                          std::to_string(cfg.head_dim / 2) + ")");
  }
  return std::pow(cfg.base, -2.0 * k / cfg.head_dim);
}

std::vector<std::int64_t> distinct_ids(std::int64_t spatial, std::int64_t temporal,
                                       std::int64_t text) {
  if (spatial < 0 || temporal < 0 || text < 0) {
    throw ValidationError("distinct_ids: negative token count");
  }
  std::vector<std::int64_t> ids(static_cast<std::size_t>(spatial + temporal + text));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int64_t>(i) + 1;
  return ids;
}

std::vector<std::int64_t> balanced_ids(std::int64_t spatial, std::int64_t temporal,
                                       std::int64_t text) {
  if (spatial < 0 || temporal < 0 || text < 0) {
    throw ValidationError("balanced_ids: negative token count");
  }
  if (temporal > spatial) {
    throw ValidationError("balanced_ids: balanced positions assume N >= M (got N=" +
                          std::to_string(spatial) + ", M=" + std::to_string(temporal) + ")");
  }
  std::vector<std::int64_t> ids;
  ids.reserve(static_cast<std::size_t>(spatial + temporal + text));
  for (std::int64_t p = spatial - temporal + 1; p <= spatial; ++p) ids.push_back(p);
  for (std::int64_t p = 1; p <= spatial; ++p) ids.push_back(p);
  for (std::int64_t p = spatial + 1; p <= spatial + text; ++p) ids.push_back(p);
  return ids;
}

PositionIds position_ids(std::int64_t spatial, std::int64_t temporal, std::int64_t text) {
  return PositionIds{distinct_ids(spatial, temporal, text), balanced_ids(spatial, temporal, text)};
}

void extend_text_ids(PositionIds& ids, std::int64_t count) {
  const bool balanced = ids.balanced.size() == ids.distinct.size();
  for (std::int64_t i = 0; i < count; ++i) {
    ids.distinct.push_back(ids.distinct.empty() ? 1 : ids.distinct.back() + 1);
    if (balanced) ids.balanced.push_back(ids.balanced.empty() ? 1 : ids.balanced.back() + 1);
  }
}

RotationTable RotationTable::build(const PositionIds& ids, const RopeConfig& cfg,
                                   RopeScheme scheme) {
  cfg.validate();
  if (scheme != RopeScheme::distinct && ids.balanced.size() != ids.distinct.size()) {
    throw ShapeError("rotation table: position tracks differ in length");
  }
  const int pairs = cfg.head_dim / 2;
  const auto rows = static_cast<Eigen::Index>(ids.size());
  RotationTable t{Mat(rows, pairs), Mat(rows, pairs)};
  for (int k = 0; k < pairs; ++k) {
    const double th = theta(k, cfg);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double angle =
          static_cast<double>(pair_position(ids, static_cast<std::size_t>(i), k, scheme)) * th;
      t.cos(i, k) = std::cos(angle);
      t.sin(i, k) = std::sin(angle);
    }
  }
  return t;
}

Mat RotationTable::apply(const Mat& x, bool transposed) const {
  if (x.rows() != cos.rows() || x.cols() != 2 * cos.cols()) {
    throw ShapeError("rope: block " + shape_string(x) + " for rotation table " +
                     std::to_string(cos.rows()) + " rows x " + std::to_string(cos.cols()) +
                     " pairs");
  }
  const double sign = transposed ? -1.0 : 1.0;
  Mat out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < cos.cols(); ++k) {
      const double c = cos(i, k), s = sign * sin(i, k);
      const double a = x(i, 2 * k), b = x(i, 2 * k + 1);
      out(i, 2 * k) = c * a - s * b;
      out(i, 2 * k + 1) = s * a + c * b;
    }
  }
  return out;
}

Mat harmonic_rotate(const Mat& x, const PositionIds& ids, const RopeConfig& cfg,
                    RopeScheme scheme) {
  if (static_cast<std::size_t>(x.rows()) != ids.size()) {
    throw ShapeError("harmonic_rotate: " + std::to_string(x.rows()) + " rows for " +
                     std::to_string(ids.size()) + " position ids");
  }
  return RotationTable::build(ids, cfg, scheme).apply(x);
}

Var rope(Var x, const RotationTable& table) {
  auto shared = std::make_shared<const RotationTable>(table);
  return apply_linear(
      x, [shared](const Mat& v) { return shared->apply(v); },
      [shared](const Mat& g) { return shared->apply(g, true); });
}

}  // namespace mash
