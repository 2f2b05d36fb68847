#include "mash/tape.hpp"

#include <cmath>
#include <utility>

namespace mash {

const Mat& Var::value() const { return tape->value(*this); }

Var Tape::parameter(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), true, false, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Mat value) {
  nodes_.push_back(Node{std::move(value), Mat(), false, false, nullptr});
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Mat value, std::vector<std::size_t> parents, BackwardFn backward) {
  bool needs = false;
  for (std::size_t p : parents) needs = needs || nodes_[p].requires_grad;
  nodes_.push_back(Node{std::move(value), Mat(), needs, false, needs ? std::move(backward) : nullptr});
  return Var{this, nodes_.size() - 1};
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(Var v, const Mat& contribution) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (contribution.rows() != n.value.rows() || contribution.cols() != n.value.cols()) {
    throw ShapeError("tape: gradient " + shape_string(contribution) + " for value " +
                     shape_string(n.value));
  }
  if (!n.has_grad) {
    n.grad = contribution;
    n.has_grad = true;
  } else {
    n.grad += contribution;
  }
}

void Tape::backward(Var target) {
  if (value(target).rows() != 1 || value(target).cols() != 1) {
    throw ShapeError("tape: backward target must be 1x1, got " + shape_string(value(target)));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(target, Mat::Ones(1, 1));
  for (std::size_t i = target.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad, n.value);
  }
}

namespace {

void require_same_shape(const char* op, const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_string(a) + " and " + shape_string(b));
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  return t.record(mash::matmul(a.value(), b.value()), {a.id, b.id},
                  [a, b](Tape& tape, const Mat& g, const Mat&) {
                    if (tape.requires_grad(a)) {
                      const Mat bt = tape.value(b).transpose();
                      tape.accumulate(a, mash::matmul(g, bt));
                    }
                    if (tape.requires_grad(b)) {
                      const Mat at = tape.value(a).transpose();
                      tape.accumulate(b, mash::matmul(at, g));
                    }
                  });
}

Var transpose(Var a) {
  Mat v = a.value().transpose();
  return a.tape->record(std::move(v), {a.id}, [a](Tape& tape, const Mat& g, const Mat&) {
    tape.accumulate(a, g.transpose());
  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a.value(), b.value());
  Mat v = a.value() + b.value();
  return a.tape->record(std::move(v), {a.id, b.id}, [a, b](Tape& tape, const Mat& g, const Mat&) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: row " + shape_string(row.value()) + " for " +
                     shape_string(a.value()));
  }
  Mat v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) v.row(i) += row.value().row(0);
  return a.tape->record(std::move(v), {a.id, row.id}, [a, row](Tape& tape, const Mat& g, const Mat&) {
    tape.accumulate(a, g);
    if (tape.requires_grad(row)) {
      Mat sum = Mat::Zero(1, g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) sum.row(0) += g.row(i);
      tape.accumulate(row, sum);
    }
  });
}

Var hadamard(Var a, Var b) {
  require_same_shape("hadamard", a.value(), b.value());
  Mat v = a.value().cwiseProduct(b.value());
  return a.tape->record(std::move(v), {a.id, b.id}, [a, b](Tape& tape, const Mat& g, const Mat&) {
    if (tape.requires_grad(a)) tape.accumulate(a, g.cwiseProduct(tape.value(b)));
    if (tape.requires_grad(b)) tape.accumulate(b, g.cwiseProduct(tape.value(a)));
  });
}

Var scale(Var a, double factor) {
  Mat v = a.value() * factor;
  return a.tape->record(std::move(v), {a.id}, [a, factor](Tape& tape, const Mat& g, const Mat&) {
    tape.accumulate(a, g * factor);
  });
}

Var silu(Var a) {
  const Mat& x = a.value();
  Mat v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) v.data()[i] = x.data()[i] * sigmoid(x.data()[i]);
  return a.tape->record(std::move(v), {a.id}, [a](Tape& tape, const Mat& g, const Mat&) {
    const Mat& xin = tape.value(a);
    Mat d(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double s = sigmoid(xin.data()[i]);
      d.data()[i] = g.data()[i] * (s + xin.data()[i] * s * (1.0 - s));
    }
    tape.accumulate(a, d);
  });
}

Var rms_norm(Var x, Var offset, double eps) {
  const Mat& xv = x.value();
  const Mat& off = offset.value();
  if (off.rows() != 1 || off.cols() != xv.cols()) {
    throw ShapeError("rms_norm: offset " + shape_string(off) + " for " + shape_string(xv));
  }
  const Eigen::Index n = xv.rows(), c = xv.cols();
  Eigen::VectorXd inv_rms(n);
  Mat v(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    double ss = 0.0;
    for (Eigen::Index j = 0; j < c; ++j) ss += xv(i, j) * xv(i, j);
    inv_rms(i) = 1.0 / std::sqrt(ss / static_cast<double>(c) + eps);
    for (Eigen::Index j = 0; j < c; ++j) v(i, j) = xv(i, j) * inv_rms(i) * (1.0 + off(0, j));
  }
  return x.tape->record(std::move(v), {x.id, offset.id},
                        [x, offset, inv_rms](Tape& tape, const Mat& g, const Mat&) {
                          const Mat& xin = tape.value(x);
                          const Mat& o = tape.value(offset);
                          const Eigen::Index rows = xin.rows(), cols = xin.cols();
                          Mat dx(rows, cols);
                          Mat doff = Mat::Zero(1, cols);
                          for (Eigen::Index i = 0; i < rows; ++i) {
                            const double r = inv_rms(i);
                            double dot = 0.0;
                            for (Eigen::Index j = 0; j < cols; ++j) {
                              const double normed = xin(i, j) * r;
                              doff(0, j) += g(i, j) * normed;
                              dot += g(i, j) * (1.0 + o(0, j)) * normed;
                            }
                            const double mean_dot = dot / static_cast<double>(cols);
                            for (Eigen::Index j = 0; j < cols; ++j) {
                              const double u = g(i, j) * (1.0 + o(0, j));
                              dx(i, j) = (u - xin(i, j) * r * mean_dot) * r;
                            }
                          }
                          tape.accumulate(x, dx);
                          tape.accumulate(offset, doff);
                        });
}

Var softmax_masked(Var a, const Mat& mask) {
  Mat probs = mash::softmax_masked(a.value(), mask);
  return a.tape->record(std::move(probs), {a.id}, [a](Tape& tape, const Mat& g, const Mat& y) {
    Mat d(g.rows(), g.cols());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (Eigen::Index j = 0; j < g.cols(); ++j) dot += g(i, j) * y(i, j);
      for (Eigen::Index j = 0; j < g.cols(); ++j) d(i, j) = y(i, j) * (g(i, j) - dot);
    }
    tape.accumulate(a, d);
  });
}

Var slice_cols(Var a, Eigen::Index first, Eigen::Index count) {
  if (first < 0 || count < 0 || first + count > a.cols()) {
    throw ShapeError("slice_cols: [" + std::to_string(first) + ", +" + std::to_string(count) +
                     ") out of " + shape_string(a.value()));
  }
  Mat v = a.value().middleCols(first, count);
  return a.tape->record(std::move(v), {a.id},
                        [a, first, count](Tape& tape, const Mat& g, const Mat&) {
                          Mat d = Mat::Zero(tape.value(a).rows(), tape.value(a).cols());
                          d.middleCols(first, count) = g;
                          tape.accumulate(a, d);
                        });
}

Var slice_rows(Var a, Eigen::Index first, Eigen::Index count) {
  if (first < 0 || count < 0 || first + count > a.rows()) {
    throw ShapeError("slice_rows: [" + std::to_string(first) + ", +" + std::to_string(count) +
                     ") out of " + shape_string(a.value()));
  }
  Mat v = a.value().middleRows(first, count);
  return a.tape->record(std::move(v), {a.id},
                        [a, first, count](Tape& tape, const Mat& g, const Mat&) {
                          Mat d = Mat::Zero(tape.value(a).rows(), tape.value(a).cols());
                          d.middleRows(first, count) = g;
                          tape.accumulate(a, d);
                        });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row count mismatch");
    cols += p.cols();
  }
  Mat v(rows, cols);
  std::vector<std::size_t> ids;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id);
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return parts.front().tape->record(std::move(v), ids,
                                    [saved](Tape& tape, const Mat& g, const Mat&) {
                                      Eigen::Index off = 0;
                                      for (const Var& p : saved) {
                                        const Eigen::Index c = tape.value(p).cols();
                                        if (tape.requires_grad(p)) {
                                          tape.accumulate(p, g.middleCols(off, c));
                                        }
                                        off += c;
                                      }
                                    });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column count mismatch");
    rows += p.rows();
  }
  Mat v(rows, cols);
  std::vector<std::size_t> ids;
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
    ids.push_back(p.id);
  }
  std::vector<Var> saved(parts.begin(), parts.end());
  return parts.front().tape->record(std::move(v), ids,
                                    [saved](Tape& tape, const Mat& g, const Mat&) {
                                      Eigen::Index off = 0;
                                      for (const Var& p : saved) {
                                        const Eigen::Index r = tape.value(p).rows();
                                        if (tape.requires_grad(p)) {
                                          tape.accumulate(p, g.middleRows(off, r));
                                        }
                                        off += r;
                                      }
                                    });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const Mat& tv = table.value();
  Mat v(static_cast<Eigen::Index>(ids.size()), tv.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tv.rows()) {
      throw ValidationError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                            std::to_string(tv.rows()) + " rows");
    }
    v.row(static_cast<Eigen::Index>(i)) = tv.row(ids[i]);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return table.tape->record(std::move(v), {table.id},
                            [table, saved](Tape& tape, const Mat& g, const Mat&) {
                              Mat d = Mat::Zero(tape.value(table).rows(), tape.value(table).cols());
                              for (std::size_t i = 0; i < saved.size(); ++i) {
                                d.row(saved[i]) += g.row(static_cast<Eigen::Index>(i));
                              }
                              tape.accumulate(table, d);
                            });
}

Var apply_linear(Var x, std::function<Mat(const Mat&)> forward,
                 std::function<Mat(const Mat&)> adjoint) {
  Mat v = forward(x.value());
  return x.tape->record(std::move(v), {x.id},
                        [x, adjoint = std::move(adjoint)](Tape& tape, const Mat& g, const Mat&) {
                          tape.accumulate(x, adjoint(g));
                        });
}

Var cross_entropy(Var logits, std::span<const int> targets, const std::vector<bool>& supervised) {
  CrossEntropyResult ce = mash::cross_entropy(logits.value(), targets, supervised);
  Mat v(1, 1);
  v(0, 0) = ce.loss;
  return logits.tape->record(std::move(v), {logits.id},
                             [logits, grad = std::move(ce.grad)](Tape& tape, const Mat& g,
                                                                const Mat&) {
                               tape.accumulate(logits, grad * g(0, 0));
                             });
}

}  // namespace mash
