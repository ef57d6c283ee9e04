#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "nrr/matrix.hpp"

namespace nrr::ad {

// Reverse-mode autodiff over dense double matrices. Graphs are built per
// forward pass (the loop structure of the soft allocation ops depends on the
// instance shape), then differentiated once from a scalar root.
//
// Gradient conventions fixed here and relied on elsewhere:
//  - row_min / row_max route the full gradient to the earliest attaining
//    column;
//  - log_clamped flattens below the clamp floor (zero gradient there);
//  - relu routes zero at the kink;
//  - backward zeroes every reachable gradient before accumulating, so
//    repeated calls never mix stale values.

constexpr double kLogClampFloor = 1e-12;

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  // Leaf that never receives gradient.
  static Tensor constant(Matrix value);
  // Leaf that accumulates gradient during backward.
  static Tensor parameter(Matrix value);

  bool defined() const { return node_ != nullptr; }
  std::size_t rows() const;
  std::size_t cols() const;
  bool requires_grad() const;

  const Matrix& value() const;
  // Gradient of the most recent backward pass; throws if none was run or the
  // tensor does not require gradient.
  const Matrix& grad() const;

  // In-place value mutation for leaves (parameter updates, finite-difference
  // probes). Graphs built earlier are invalidated by this.
  Matrix& mutable_value();

  // Engine-internal handle; not part of the stable surface.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Elementwise, same shape required.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Numerically stable softmax applied independently to each row.
Tensor row_softmax(const Tensor& a);

// Natural log with inputs clamped up to kLogClampFloor.
Tensor log_clamped(const Tensor& a);

Tensor square(const Tensor& a);
Tensor relu(const Tensor& a);

// Row reductions to an n-by-1 column.
Tensor row_min(const Tensor& a);
Tensor row_max(const Tensor& a);
Tensor row_sum(const Tensor& a);

// Column reduction to a 1-by-m row.
Tensor col_sum(const Tensor& a);

// Full reductions to 1x1.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Vertical stack of k copies; rejects k < 1.
Tensor repeat_rows(const Tensor& a, std::size_t k);

// Rows [begin, begin + count).
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);

Tensor hconcat(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& a);

// vec must be 1x1, a row (1 x cols) or a column (rows x 1) matching the
// matrix operand; the vector is expanded across the other dimension.
Tensor add_broadcast(const Tensor& m, const Tensor& vec);
Tensor sub_broadcast(const Tensor& m, const Tensor& vec);
Tensor mul_broadcast(const Tensor& m, const Tensor& vec);
Tensor div_broadcast(const Tensor& m, const Tensor& vec);

// a + c with c held outside the graph.
Tensor add_detached(const Tensor& a, const Matrix& c);

// Reverse pass from a scalar (1x1) root. Zeroes reachable grads first, then
// accumulates; deterministic node order.
void backward(const Tensor& loss);

// Central-difference validation of the full reverse pass. rebuild() must
// construct a fresh scalar graph from the current values of params. Returns
// the max over parameter entries of
// |analytic - central| / max(1, |analytic|, |central|).
double finite_difference_check(const std::function<Tensor()>& rebuild,
                               std::vector<Tensor> params, double step);

}  // namespace nrr::ad
