#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mash {

/// Dense row-major matrix. Every tensor in the library is one of these.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Mat = Matrix<double>;

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class InvariantError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename Scalar>
constexpr Scalar neg_inf() {
  return -std::numeric_limits<Scalar>::infinity();
}

/// C = A * B, summing over k left to right for every output entry.
template <typename DerivedA, typename DerivedB>
Matrix<typename DerivedA::Scalar> matmul(const Eigen::MatrixBase<DerivedA>& a,
                                         const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + shape_string(a) + " by " + shape_string(b));
  }
  const Eigen::Index n = a.rows(), inner = a.cols(), m = b.cols();
  Matrix<Scalar> c = Matrix<Scalar>::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < inner; ++k) {
      const Scalar aik = a(i, k);
      for (Eigen::Index j = 0; j < m; ++j) {
        c(i, j) += aik * b(k, j);
      }
    }
  }
  return c;
}

/// Row-wise softmax of (logits + mask). Entries whose mask is -inf come out
/// as exactly zero. A row with no finite mask entry is rejected.
template <typename DerivedL, typename DerivedM>
Matrix<typename DerivedL::Scalar> softmax_masked(const Eigen::MatrixBase<DerivedL>& logits,
                                                 const Eigen::MatrixBase<DerivedM>& mask) {
  using Scalar = typename DerivedL::Scalar;
  if (logits.rows() != mask.rows() || logits.cols() != mask.cols()) {
    throw ShapeError("softmax_masked: logits " + shape_string(logits) + " vs mask " +
                     shape_string(mask));
  }
  Matrix<Scalar> out = Matrix<Scalar>::Zero(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Scalar row_max = neg_inf<Scalar>();
    bool any = false;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (mask(i, j) == neg_inf<Scalar>()) continue;
      const Scalar z = logits(i, j) + mask(i, j);
      if (!any || z > row_max) row_max = z;
      any = true;
    }
    if (!any) {
      throw InvariantError("softmax_masked: row " + std::to_string(i) + " is fully masked");
    }
    Scalar total = 0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      if (mask(i, j) == neg_inf<Scalar>()) continue;
      const Scalar e = std::exp(logits(i, j) + mask(i, j) - row_max);
      out(i, j) = e;
      total += e;
    }
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      out(i, j) /= total;
    }
  }
  return out;
}

struct CrossEntropyResult {
  double loss = 0.0;
  Mat grad;  // d loss / d logits
};

/// Mean negative log-likelihood over the rows flagged in `supervised`.
/// targets[i] is the class expected at row i; unsupervised rows are ignored.
CrossEntropyResult cross_entropy(const Mat& logits, std::span<const int> targets,
                                 const std::vector<bool>& supervised);

/// Relative-error gradient checker. `f` evaluates the scalar objective for a
/// flat parameter vector; `analytic` is the gradient under test.
/// Returns max_i |analytic_i - fd_i| / max(1, |fd_i|) using central differences.
template <typename F>
double finite_diff_check(F&& f, std::vector<double> params, std::span<const double> analytic,
                         double eps = 1e-5) {
  if (eps < 1e-6 || eps > 1e-4) {
    throw ValidationError("finite_diff_check: eps must lie in [1e-6, 1e-4]");
  }
  if (analytic.size() != params.size()) {
    throw ShapeError("finite_diff_check: " + std::to_string(analytic.size()) +
                     " analytic entries for " + std::to_string(params.size()) + " parameters");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + eps;
    const double up = f(std::as_const(params));
    params[i] = saved - eps;
    const double down = f(std::as_const(params));
    params[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw InvariantError("finite_diff_check: objective is not finite at parameter " +
                           std::to_string(i));
    }
    const double fd = (up - down) / (2.0 * eps);
    const double rel = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace mash
