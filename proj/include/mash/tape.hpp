#pragma once

#include "mash/numerics.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace mash {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order;
/// backward() walks them in reverse and accumulates adjoints into parents.
/// A tape belongs to one evaluation and must not be shared across threads.
class Tape {
public:
  using BackwardFn = std::function<void(Tape&, const Mat& grad_out, const Mat& value_out)>;

  /// Trainable leaf; its gradient is available after backward().
  Var parameter(Mat value);
  /// Leaf that never receives a gradient.
  Var constant(Mat value);

  Var record(Mat value, std::vector<std::size_t> parents, BackwardFn backward);

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() target w.r.t. v (zeros if v was unused).
  Mat grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Accumulate an adjoint contribution into v. Used by op backward functions.
  void accumulate(Var v, const Mat& contribution);

  /// Seeds d(target)/d(target) = 1 for a 1x1 target and propagates.
  void backward(Var target);

  std::size_t size() const { return nodes_.size(); }

private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable primitives. Each records its own adjoint rule.

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var add_row(Var a, Var row);  // broadcasts a 1xC row over every row of a
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
Var silu(Var a);
/// x / rms(x) * (1 + offset), per row; offset is 1xC.
Var rms_norm(Var x, Var offset, double eps = 1e-6);
/// Row softmax of (a + mask); mask is a constant with entries 0 or -inf.
Var softmax_masked(Var a, const Mat& mask);
Var slice_cols(Var a, Eigen::Index first, Eigen::Index count);
Var slice_rows(Var a, Eigen::Index first, Eigen::Index count);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Row lookup into an embedding table.
Var gather_rows(Var table, std::span<const int> ids);
/// Linear map y = f(x) with adjoint g; used for fixed rotations.
Var apply_linear(Var x, std::function<Mat(const Mat&)> forward, std::function<Mat(const Mat&)> adjoint);
/// 1x1 mean negative log-likelihood over supervised rows.
Var cross_entropy(Var logits, std::span<const int> targets, const std::vector<bool>& supervised);

}  // namespace mash
