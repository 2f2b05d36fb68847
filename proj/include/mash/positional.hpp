#pragma once

#include "mash/numerics.hpp"
#include "mash/tape.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mash {

struct RopeConfig {
  int head_dim = 8;
  double base = 10000.0;

  void validate() const;
};

/// Which position track drives each feature pair.
enum class RopeScheme { distinct, balanced, harmonic };

std::string_view to_string(RopeScheme s);
RopeScheme parse_rope_scheme(std::string_view s);

struct PositionIds {
  std::vector<std::int64_t> distinct;
  std::vector<std::int64_t> balanced;

  std::size_t size() const { return distinct.size(); }
};

/// Rotation angle for feature pair k: base^(-2k / head_dim).
double theta(int k, const RopeConfig& cfg);

/// 1..N+M+L in sequence order (temporal, spatial, text).
std::vector<std::int64_t> distinct_ids(std::int64_t spatial, std::int64_t temporal,
                                       std::int64_t text);

/// Temporal block right-aligned to end at N, spatial 1..N, text N+1..N+L.
/// Requires N >= M so the temporal block never starts below 1.
std::vector<std::int64_t> balanced_ids(std::int64_t spatial, std::int64_t temporal,
                                       std::int64_t text);

PositionIds position_ids(std::int64_t spatial, std::int64_t temporal, std::int64_t text);

/// Appends `count` generated text positions to both tracks.
void extend_text_ids(PositionIds& ids, std::int64_t count);

/// Position used by feature pair k of row i under a scheme.
inline std::int64_t pair_position(const PositionIds& ids, std::size_t row, int pair,
                                   RopeScheme scheme) {
  switch (scheme) {
    case RopeScheme::distinct:
      return ids.distinct[row];
    case RopeScheme::balanced:
      return ids.balanced[row];
    case RopeScheme::harmonic:
      return pair % 2 == 0 ? ids.balanced[row] : ids.distinct[row];
  }
  return ids.distinct[row];
}

/// Rotates pair k of x by angle p * theta_k.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> rope_rotate(
    const Eigen::MatrixBase<Derived>& x, std::int64_t p, const RopeConfig& cfg) {
  using Scalar = typename Derived::Scalar;
  cfg.validate();
  if (x.size() != cfg.head_dim) {
    throw ShapeError("rope_rotate: vector of length " + std::to_string(x.size()) +
                     " for head_dim " + std::to_string(cfg.head_dim));
  }
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(x.size());
  for (int k = 0; k < cfg.head_dim / 2; ++k) {
    const Scalar angle = static_cast<Scalar>(p) * static_cast<Scalar>(theta(k, cfg));
    const Scalar c = std::cos(angle), s = std::sin(angle);
    const Scalar a = x(2 * k), b = x(2 * k + 1);
    out(2 * k) = c * a - s * b;
    out(2 * k + 1) = s * a + c * b;
  }
  return out;
}

/// Precomputed cos/sin per (row, pair) for one scheme and id assignment.
struct RotationTable {
  Mat cos;  // rows x head_dim/2
  Mat sin;

  static RotationTable build(const PositionIds& ids, const RopeConfig& cfg, RopeScheme scheme);

  /// Applies the rotation (or its transpose) to an S x head_dim block.
  Mat apply(const Mat& x, bool transposed = false) const;
};

/// Rotates every row of X with the position track selected per pair by `scheme`.
Mat harmonic_rotate(const Mat& x, const PositionIds& ids, const RopeConfig& cfg,
                    RopeScheme scheme);

/// Differentiable rotation of an S x head_dim block.
Var rope(Var x, const RotationTable& table);

}  // namespace mash
