#include "nrr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace nrr::ad {

namespace detail {

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  bool grad_valid = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backprop;
};

namespace {

std::shared_ptr<Node> leaf(Matrix value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

bool wants_grad(Node& n) { return n.requires_grad; }

void ensure_grad(Node& n) {
  if (!n.grad_valid) {
    n.grad = Matrix(n.value.rows(), n.value.cols(), 0.0);
    n.grad_valid = true;
  }
}

}  // namespace

}  // namespace detail

using detail::Node;

Tensor Tensor::constant(Matrix value) { return Tensor(detail::leaf(std::move(value), false)); }
Tensor Tensor::parameter(Matrix value) { return Tensor(detail::leaf(std::move(value), true)); }

std::size_t Tensor::rows() const { return node_->value.rows(); }
std::size_t Tensor::cols() const { return node_->value.cols(); }
bool Tensor::requires_grad() const { return node_->requires_grad; }

const Matrix& Tensor::value() const {
  if (!node_) throw std::logic_error("Tensor: empty handle");
  return node_->value;
}

const Matrix& Tensor::grad() const {
  if (!node_) throw std::logic_error("Tensor: empty handle");
  if (!node_->requires_grad) throw std::logic_error("Tensor::grad: tensor does not require grad");
  if (!node_->grad_valid) throw std::logic_error("Tensor::grad: no backward pass has reached this tensor");
  return node_->grad;
}

Matrix& Tensor::mutable_value() {
  if (!node_) throw std::logic_error("Tensor: empty handle");
  return node_->value;
}

namespace {

using detail::ensure_grad;

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                              b.shape_string());
}

std::shared_ptr<Node> make_op(Matrix value, std::vector<std::shared_ptr<Node>> parents,
                              std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

enum class ElemwiseKind { Add, Sub, Mul, Div };

Tensor elemwise(const char* name, ElemwiseKind kind, const Tensor& a, const Tensor& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (!av.same_shape(bv)) shape_error(name, av, bv);
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    switch (kind) {
      case ElemwiseKind::Add: out[i] = av[i] + bv[i]; break;
      case ElemwiseKind::Sub: out[i] = av[i] - bv[i]; break;
      case ElemwiseKind::Mul: out[i] = av[i] * bv[i]; break;
      case ElemwiseKind::Div: out[i] = av[i] / bv[i]; break;
    }
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor(make_op(std::move(out), {an, bn}, [kind, an = an.get(), bn = bn.get()](Node& self) {
    const Matrix& g = self.grad;
    if (detail::wants_grad(*an)) {
      ensure_grad(*an);
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case ElemwiseKind::Add:
          case ElemwiseKind::Sub: an->grad[i] += g[i]; break;
          case ElemwiseKind::Mul: an->grad[i] += g[i] * bn->value[i]; break;
          case ElemwiseKind::Div: an->grad[i] += g[i] / bn->value[i]; break;
        }
      }
    }
    if (detail::wants_grad(*bn)) {
      ensure_grad(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (kind) {
          case ElemwiseKind::Add: bn->grad[i] += g[i]; break;
          case ElemwiseKind::Sub: bn->grad[i] -= g[i]; break;
          case ElemwiseKind::Mul: bn->grad[i] += g[i] * an->value[i]; break;
          case ElemwiseKind::Div:
            bn->grad[i] -= g[i] * self.value[i] / bn->value[i];
            break;
        }
      }
    }
  }));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elemwise("add", ElemwiseKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elemwise("sub", ElemwiseKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elemwise("mul", ElemwiseKind::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elemwise("div", ElemwiseKind::Div, a, b); }

Tensor scale(const Tensor& a, double factor) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [factor, an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * factor;
  }));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Matrix out = la::matmul(av, bv);
  auto an = a.node();
  auto bn = b.node();
  return Tensor(make_op(std::move(out), {an, bn}, [an = an.get(), bn = bn.get()](Node& self) {
    const Matrix& g = self.grad;
    if (detail::wants_grad(*an)) {
      ensure_grad(*an);
      // dA += G * B^T
      for (std::size_t i = 0; i < an->value.rows(); ++i) {
        for (std::size_t j = 0; j < g.cols(); ++j) {
          const double gij = g(i, j);
          if (gij == 0.0) continue;
          for (std::size_t k = 0; k < an->value.cols(); ++k) {
            an->grad(i, k) += gij * bn->value(k, j);
          }
        }
      }
    }
    if (detail::wants_grad(*bn)) {
      ensure_grad(*bn);
      // dB += A^T * G
      for (std::size_t i = 0; i < an->value.rows(); ++i) {
        for (std::size_t k = 0; k < an->value.cols(); ++k) {
          const double aik = an->value(i, k);
          if (aik == 0.0) continue;
          for (std::size_t j = 0; j < g.cols(); ++j) {
            bn->grad(k, j) += aik * g(i, j);
          }
        }
      }
    }
  }));
}

Tensor transpose(const Tensor& a) {
  auto an = a.node();
  return Tensor(make_op(la::transpose(a.value()), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < self.grad.rows(); ++i) {
      for (std::size_t j = 0; j < self.grad.cols(); ++j) {
        an->grad(j, i) += self.grad(i, j);
      }
    }
  }));
}

Tensor row_softmax(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    double mx = av(i, 0);
    for (std::size_t j = 1; j < av.cols(); ++j) mx = std::max(mx, av(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < av.cols(); ++j) {
      const double e = std::exp(av(i, j) - mx);
      out(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) /= total;
  }
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    // dx = y .* (g - <g, y>) per row
    for (std::size_t i = 0; i < self.value.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < self.value.cols(); ++j) {
        dot += self.grad(i, j) * self.value(i, j);
      }
      for (std::size_t j = 0; j < self.value.cols(); ++j) {
        an->grad(i, j) += self.value(i, j) * (self.grad(i, j) - dot);
      }
    }
  }));
}

Tensor log_clamped(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = std::log(std::max(av[i], kLogClampFloor));
  }
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = an->value[i];
      if (x >= kLogClampFloor) an->grad[i] += self.grad[i] / x;
      // flat below the clamp floor
    }
  }));
}

Tensor square(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * av[i];
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += 2.0 * an->value[i] * self.grad[i];
    }
  }));
}

Tensor relu(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (an->value[i] > 0.0) an->grad[i] += self.grad[i];
    }
  }));
}

namespace {

enum class RowExtreme { Min, Max };

Tensor row_extreme(RowExtreme kind, const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  std::vector<std::size_t> pick(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < av.cols(); ++j) {
      const bool better =
          kind == RowExtreme::Min ? av(i, j) < av(i, best) : av(i, j) > av(i, best);
      if (better) best = j;  // strict comparison keeps the earliest column on ties
    }
    out(i, 0) = av(i, best);
    pick[i] = best;
  }
  auto an = a.node();
  return Tensor(
      make_op(std::move(out), {an}, [an = an.get(), pick = std::move(pick)](Node& self) {
        ensure_grad(*an);
        for (std::size_t i = 0; i < pick.size(); ++i) {
          an->grad(i, pick[i]) += self.grad(i, 0);
        }
      }));
}

}  // namespace

Tensor row_min(const Tensor& a) { return row_extreme(RowExtreme::Min, a); }
Tensor row_max(const Tensor& a) { return row_extreme(RowExtreme::Max, a); }

Tensor row_sum(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1, 0.0);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, 0) += av(i, j);
  }
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < an->value.rows(); ++i) {
      for (std::size_t j = 0; j < an->value.cols(); ++j) an->grad(i, j) += self.grad(i, 0);
    }
  }));
}

Tensor col_sum(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(1, av.cols(), 0.0);
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out(0, j) += av(i, j);
  }
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < an->value.rows(); ++i) {
      for (std::size_t j = 0; j < an->value.cols(); ++j) an->grad(i, j) += self.grad(0, j);
    }
  }));
}

Tensor sum(const Tensor& a) {
  const Matrix& av = a.value();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i];
  Matrix out(1, 1, total);
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    const double g = self.grad(0, 0);
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
  }));
}

Tensor mean(const Tensor& a) {
  const Matrix& av = a.value();
  if (av.size() == 0) throw std::invalid_argument("mean: empty tensor");
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) total += av[i];
  Matrix out(1, 1, total / static_cast<double>(av.size()));
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    const double g = self.grad(0, 0) / static_cast<double>(an->grad.size());
    for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
  }));
}

Tensor repeat_rows(const Tensor& a, std::size_t k) {
  if (k < 1) throw std::invalid_argument("repeat_rows: k must be >= 1");
  const Matrix& av = a.value();
  Matrix out(av.rows() * k, av.cols());
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t i = 0; i < av.rows(); ++i) {
      for (std::size_t j = 0; j < av.cols(); ++j) out(r * av.rows() + i, j) = av(i, j);
    }
  }
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [k, an = an.get()](Node& self) {
    ensure_grad(*an);
    const std::size_t n = an->value.rows();
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < an->value.cols(); ++j) {
          an->grad(i, j) += self.grad(r * n + i, j);
        }
      }
    }
  }));
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  const Matrix& av = a.value();
  if (begin + count > av.rows()) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") exceeds " + av.shape_string());
  }
  Matrix out(count, av.cols());
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(begin + i, j);
  }
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [begin, an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < self.grad.rows(); ++i) {
      for (std::size_t j = 0; j < self.grad.cols(); ++j) {
        an->grad(begin + i, j) += self.grad(i, j);
      }
    }
  }));
}

Tensor hconcat(const Tensor& a, const Tensor& b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) shape_error("hconcat", av, bv);
  Matrix out(av.rows(), av.cols() + bv.cols());
  for (std::size_t i = 0; i < av.rows(); ++i) {
    for (std::size_t j = 0; j < av.cols(); ++j) out(i, j) = av(i, j);
    for (std::size_t j = 0; j < bv.cols(); ++j) out(i, av.cols() + j) = bv(i, j);
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor(make_op(std::move(out), {an, bn}, [an = an.get(), bn = bn.get()](Node& self) {
    const std::size_t split = an->value.cols();
    if (detail::wants_grad(*an)) {
      ensure_grad(*an);
      for (std::size_t i = 0; i < an->value.rows(); ++i) {
        for (std::size_t j = 0; j < split; ++j) an->grad(i, j) += self.grad(i, j);
      }
    }
    if (detail::wants_grad(*bn)) {
      ensure_grad(*bn);
      for (std::size_t i = 0; i < bn->value.rows(); ++i) {
        for (std::size_t j = 0; j < bn->value.cols(); ++j) {
          bn->grad(i, j) += self.grad(i, split + j);
        }
      }
    }
  }));
}

Tensor tanh(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::tanh(av[i]);
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i] * (1.0 - self.value[i] * self.value[i]);
    }
  }));
}

namespace {

enum class BroadcastAxis { Scalar, Row, Col };

BroadcastAxis classify_broadcast(const char* name, const Matrix& m, const Matrix& v) {
  if (v.rows() == 1 && v.cols() == 1) return BroadcastAxis::Scalar;
  if (v.rows() == m.rows() && v.cols() == 1) return BroadcastAxis::Col;
  if (v.rows() == 1 && v.cols() == m.cols()) return BroadcastAxis::Row;
  shape_error(name, m, v);
}

double broadcast_at(BroadcastAxis axis, const Matrix& v, std::size_t i, std::size_t j) {
  switch (axis) {
    case BroadcastAxis::Scalar: return v(0, 0);
    case BroadcastAxis::Col: return v(i, 0);
    case BroadcastAxis::Row: return v(0, j);
  }
  return 0.0;  // unreachable
}

Tensor broadcast_op(const char* name, ElemwiseKind kind, const Tensor& m, const Tensor& vec) {
  const Matrix& mv = m.value();
  const Matrix& vv = vec.value();
  const BroadcastAxis axis = classify_broadcast(name, mv, vv);
  Matrix out(mv.rows(), mv.cols());
  for (std::size_t i = 0; i < mv.rows(); ++i) {
    for (std::size_t j = 0; j < mv.cols(); ++j) {
      const double b = broadcast_at(axis, vv, i, j);
      switch (kind) {
        case ElemwiseKind::Add: out(i, j) = mv(i, j) + b; break;
        case ElemwiseKind::Sub: out(i, j) = mv(i, j) - b; break;
        case ElemwiseKind::Mul: out(i, j) = mv(i, j) * b; break;
        case ElemwiseKind::Div: out(i, j) = mv(i, j) / b; break;
      }
    }
  }
  auto mn = m.node();
  auto vn = vec.node();
  return Tensor(
      make_op(std::move(out), {mn, vn}, [kind, axis, mn = mn.get(), vn = vn.get()](Node& self) {
        const Matrix& g = self.grad;
        if (detail::wants_grad(*mn)) {
          ensure_grad(*mn);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) {
              switch (kind) {
                case ElemwiseKind::Add:
                case ElemwiseKind::Sub: mn->grad(i, j) += g(i, j); break;
                case ElemwiseKind::Mul:
                  mn->grad(i, j) += g(i, j) * broadcast_at(axis, vn->value, i, j);
                  break;
                case ElemwiseKind::Div:
                  mn->grad(i, j) += g(i, j) / broadcast_at(axis, vn->value, i, j);
                  break;
              }
            }
          }
        }
        if (detail::wants_grad(*vn)) {
          ensure_grad(*vn);
          for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) {
              double contrib = 0.0;
              switch (kind) {
                case ElemwiseKind::Add: contrib = g(i, j); break;
                case ElemwiseKind::Sub: contrib = -g(i, j); break;
                case ElemwiseKind::Mul: contrib = g(i, j) * mn->value(i, j); break;
                case ElemwiseKind::Div: {
                  const double b = broadcast_at(axis, vn->value, i, j);
                  contrib = -g(i, j) * mn->value(i, j) / (b * b);
                  break;
                }
              }
              switch (axis) {
                case BroadcastAxis::Scalar: vn->grad(0, 0) += contrib; break;
                case BroadcastAxis::Col: vn->grad(i, 0) += contrib; break;
                case BroadcastAxis::Row: vn->grad(0, j) += contrib; break;
              }
            }
          }
        }
      }));
}

}  // namespace

Tensor add_broadcast(const Tensor& m, const Tensor& vec) {
  return broadcast_op("add_broadcast", ElemwiseKind::Add, m, vec);
}
Tensor sub_broadcast(const Tensor& m, const Tensor& vec) {
  return broadcast_op("sub_broadcast", ElemwiseKind::Sub, m, vec);
}
Tensor mul_broadcast(const Tensor& m, const Tensor& vec) {
  return broadcast_op("mul_broadcast", ElemwiseKind::Mul, m, vec);
}
Tensor div_broadcast(const Tensor& m, const Tensor& vec) {
  return broadcast_op("div_broadcast", ElemwiseKind::Div, m, vec);
}

Tensor add_detached(const Tensor& a, const Matrix& c) {
  const Matrix& av = a.value();
  if (!av.same_shape(c)) shape_error("add_detached", av, c);
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + c[i];
  auto an = a.node();
  return Tensor(make_op(std::move(out), {an}, [an = an.get()](Node& self) {
    ensure_grad(*an);
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  }));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::logic_error("backward: empty tensor");
  Node* root = loss.node().get();
  if (root->value.rows() != 1 || root->value.cols() != 1) {
    throw std::invalid_argument("backward: loss must be a 1x1 scalar, got " +
                                root->value.shape_string());
  }
  if (!root->requires_grad) return;  // nothing reachable wants a gradient

  // Post-order DFS; each node appears once, producing a reverse topological
  // order over the gradient-carrying subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    Node* node = stack.back().first;
    std::size_t next = stack.back().second;
    if (next < node->parents.size()) {
      stack.back().second = next + 1;
      Node* parent = node->parents[next].get();
      if (parent->requires_grad && !visited.count(parent)) {
        visited.insert(parent);
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* node : order) {
    node->grad = Matrix(node->value.rows(), node->value.cols(), 0.0);
    node->grad_valid = true;
  }
  root->grad(0, 0) = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

double finite_difference_check(const std::function<Tensor()>& rebuild,
                               std::vector<Tensor> params, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_difference_check: step must be positive");

  Tensor loss = rebuild();
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("finite_difference_check: function must produce a scalar");
  }
  backward(loss);

  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    if (!p.requires_grad()) {
      throw std::invalid_argument("finite_difference_check: all params must require grad");
    }
    try {
      analytic.push_back(p.grad());
    } catch (const std::logic_error&) {
      // parameter not reachable from the loss: analytic gradient is zero
      analytic.emplace_back(p.value().rows(), p.value().cols(), 0.0);
    }
  }

  auto eval = [&rebuild](std::size_t param_idx, std::size_t entry) {
    const double f = rebuild().value()(0, 0);
    if (!std::isfinite(f)) {
      throw std::runtime_error("finite_difference_check: non-finite value at parameter " +
                               std::to_string(param_idx) + " entry " + std::to_string(entry));
    }
    return f;
  };

  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& values = params[p].mutable_value();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double saved = values[e];
      values[e] = saved + step;
      const double f_plus = eval(p, e);
      values[e] = saved - step;
      const double f_minus = eval(p, e);
      values[e] = saved;
      const double central = (f_plus - f_minus) / (2.0 * step);
      const double a = analytic[p][e];
      const double rel =
          std::fabs(a - central) / std::max({1.0, std::fabs(a), std::fabs(central)});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace nrr::ad
