#include "mash/numerics.hpp"

namespace mash {

CrossEntropyResult cross_entropy(const Mat& logits, std::span<const int> targets,
                                 const std::vector<bool>& supervised) {
  const auto rows = static_cast<std::size_t>(logits.rows());
  if (targets.size() != rows || supervised.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(rows) + " logit rows, " +
                     std::to_string(targets.size()) + " targets, " +
                     std::to_string(supervised.size()) + " mask entries");
  }
  std::size_t count = 0;
  for (bool s : supervised) count += s ? 1 : 0;
  if (count == 0) throw ValidationError("cross_entropy: empty supervision");

  CrossEntropyResult out;
  out.grad = Mat::Zero(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!supervised[i]) continue;
    const int t = targets[i];
    if (t < 0 || t >= logits.cols()) {
      throw ValidationError("cross_entropy: target " + std::to_string(t) + " outside vocabulary");
    }
    const auto r = static_cast<Eigen::Index>(i);
    double row_max = logits(r, 0);
    for (Eigen::Index j = 1; j < logits.cols(); ++j) row_max = std::max(row_max, logits(r, j));
    double total = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) total += std::exp(logits(r, j) - row_max);
    const double log_z = row_max + std::log(total);
    out.loss += (log_z - logits(r, t)) * inv;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      out.grad(r, j) = std::exp(logits(r, j) - log_z) * inv;
    }
    out.grad(r, t) -= inv;
  }
  return out;
}

}  // namespace mash
