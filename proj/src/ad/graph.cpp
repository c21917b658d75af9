#include "icil/ad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>

#include "icil/common/error.hpp"

namespace icil::ad {

namespace {

const Array kEmpty;

Array& grad_of(Node& n) {
  if (n.grad.empty()) n.grad = Array::zeros_like(n.value);
  return n.grad;
}

Var make_result(Array value, std::initializer_list<Var> inputs, const char* op,
                std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  for (const Var& in : inputs) {
    if (!in.defined() || in.value().empty()) {
      throw Error(std::string(op) + ": operand has not been evaluated");
    }
    if (in.requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    for (const Var& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(bw);
  }
  return Var(std::move(node));
}

void require_rank2(const Array& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a rank-2 operand, got shape " + a.shape_string());
  }
}

enum class Bcast { same, row_b, row_a, scalar_b, scalar_a };

struct Broadcast {
  Bcast kind;
  std::size_t cols;
  Shape out;

  std::size_t ia(std::size_t i) const {
    switch (kind) {
      case Bcast::row_a: return i % cols;
      case Bcast::scalar_a: return 0;
      default: return i;
    }
  }
  std::size_t ib(std::size_t i) const {
    switch (kind) {
      case Bcast::row_b: return i % cols;
      case Bcast::scalar_b: return 0;
      default: return i;
    }
  }
};

bool is_row_of(const Array& row, const Array& full) {
  return full.rank() == 2 && row.rows() == 1 && row.cols() == full.cols();
}

Broadcast broadcast(const Array& a, const Array& b, const char* op) {
  if (a.shape() == b.shape()) return {Bcast::same, a.cols(), a.shape()};
  if (b.size() == 1) return {Bcast::scalar_b, a.cols(), a.shape()};
  if (a.size() == 1) return {Bcast::scalar_a, b.cols(), b.shape()};
  if (is_row_of(b, a)) return {Bcast::row_b, a.cols(), a.shape()};
  if (is_row_of(a, b)) return {Bcast::row_a, b.cols(), b.shape()};
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

template <typename F>
Var unary(const Var& a, const char* op, F&& f, std::function<void(Node&)> bw) {
  const Array& x = a.value();
  Array y = Array::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return make_result(std::move(y), {a}, op, std::move(bw));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

}  // namespace

// ---- Var ----

const Array& Var::value() const { return node_ ? node_->value : kEmpty; }
const Array& Var::grad() const { return node_ ? node_->grad : kEmpty; }
Array& Var::mutable_value() {
  if (!node_) throw Error("Var: undefined node");
  return node_->value;
}
Array& Var::mutable_grad() {
  if (!node_) throw Error("Var: undefined node");
  return grad_of(*node_);
}
bool Var::requires_grad() const { return node_ && node_->requires_grad; }
const char* Var::op() const { return node_ ? node_->op : "undefined"; }

// ---- leaves ----

namespace {
Var leaf(Array value, bool requires_grad, const char* op) {
  if (value.empty()) throw Error(std::string(op) + ": empty value");
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite entry in leaf of shape " + value.shape_string());
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->op = op;
  return Var(std::move(node));
}
}  // namespace

Var constant(Array value) { return leaf(std::move(value), false, "constant"); }
Var parameter(Array value) { return leaf(std::move(value), true, "parameter"); }

Var stop_gradient(const Var& x) {
  if (!x.defined() || x.value().empty()) throw Error("stop_gradient: operand has not been evaluated");
  auto node = std::make_shared<Node>();
  node->value = x.value();
  node->op = "stop_gradient";
  return Var(std::move(node));
}

Array forward(const Var& root) {
  if (!root.defined() || root.value().empty()) throw Error("forward: root has no evaluated value");
  return root.value();
}

void backward(const Var& root) {
  if (!root.defined() || root.value().empty()) {
    throw Error("backward: called before the root was evaluated");
  }
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be a single element, got shape " + root.value().shape_string());
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS over gradient-carrying edges.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->parents.empty()) n->grad = Array::zeros_like(n->value);
  }
  grad_of(*root.node())[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---- linear algebra and elementwise ----

Var matmul(const Var& a, const Var& b) {
  const Array& x = a.value();
  const Array& y = b.value();
  require_rank2(x, "matmul");
  require_rank2(y, "matmul");
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul: inner extents differ, " + x.shape_string() + " x " + y.shape_string());
  }
  Array out({x.rows(), y.cols()});
  out.matrix().noalias() = x.matrix() * y.matrix();
  return make_result(std::move(out), {a, b}, "matmul", [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    auto g = self.grad.matrix();
    if (pa.requires_grad) grad_of(pa).matrix().noalias() += g * pb.value.matrix().transpose();
    if (pb.requires_grad) grad_of(pb).matrix().noalias() += pa.value.matrix().transpose() * g;
  });
}

Var affine(const Var& x, const Var& w, const Var& b) {
  const Array& xv = x.value();
  const Array& wv = w.value();
  const Array& bv = b.value();
  require_rank2(xv, "affine");
  require_rank2(wv, "affine");
  if (xv.cols() != wv.rows() || bv.size() != wv.cols()) {
    throw ShapeError("affine: incompatible shapes " + xv.shape_string() + ", " + wv.shape_string() + ", " +
                     bv.shape_string());
  }
  Array out({xv.rows(), wv.cols()});
  auto o = out.matrix();
  o.noalias() = xv.matrix() * wv.matrix();
  o.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data().data(), static_cast<Eigen::Index>(bv.size()));
  return make_result(std::move(out), {x, w, b}, "affine", [](Node& self) {
    Node& px = parent(self, 0);
    Node& pw = parent(self, 1);
    Node& pb = parent(self, 2);
    auto g = self.grad.matrix();
    if (px.requires_grad) grad_of(px).matrix().noalias() += g * pw.value.matrix().transpose();
    if (pw.requires_grad) grad_of(pw).matrix().noalias() += px.value.matrix().transpose() * g;
    if (pb.requires_grad) {
      Array& gb = grad_of(pb);
      Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), static_cast<Eigen::Index>(gb.size())) += g.colwise().sum();
    }
  });
}

Var add(const Var& a, const Var& b) {
  Broadcast bc = broadcast(a.value(), b.value(), "add");
  Array out(bc.out);
  const Array& x = a.value();
  const Array& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[bc.ia(i)] + y[bc.ib(i)];
  return make_result(std::move(out), {a, b}, "add", [bc](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const Array& g = self.grad;
    if (pa.requires_grad) {
      Array& ga = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[bc.ia(i)] += g[i];
    }
    if (pb.requires_grad) {
      Array& gb = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bc.ib(i)] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  Broadcast bc = broadcast(a.value(), b.value(), "sub");
  Array out(bc.out);
  const Array& x = a.value();
  const Array& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[bc.ia(i)] - y[bc.ib(i)];
  return make_result(std::move(out), {a, b}, "sub", [bc](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const Array& g = self.grad;
    if (pa.requires_grad) {
      Array& ga = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[bc.ia(i)] += g[i];
    }
    if (pb.requires_grad) {
      Array& gb = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bc.ib(i)] -= g[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  Broadcast bc = broadcast(a.value(), b.value(), "mul");
  Array out(bc.out);
  const Array& x = a.value();
  const Array& y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[bc.ia(i)] * y[bc.ib(i)];
  return make_result(std::move(out), {a, b}, "mul", [bc](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    const Array& g = self.grad;
    if (pa.requires_grad) {
      Array& ga = grad_of(pa);
      for (std::size_t i = 0; i < g.size(); ++i) ga[bc.ia(i)] += g[i] * pb.value[bc.ib(i)];
    }
    if (pb.requires_grad) {
      Array& gb = grad_of(pb);
      for (std::size_t i = 0; i < g.size(); ++i) gb[bc.ib(i)] += g[i] * pa.value[bc.ia(i)];
    }
  });
}

Var scale(const Var& a, double factor) {
  return unary(a, "scale", [factor](double v) { return v * factor; }, [factor](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * self.grad[i];
  });
}

Var add_scalar(const Var& a, double c) {
  return unary(a, "add_scalar", [c](double v) { return v + c; }, [](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var exp(const Var& a) {
  return unary(a, "exp", [](double v) { return std::exp(v); }, [](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * self.value[i];
  });
}

Var log(const Var& a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive input " + std::to_string(v));
  }
  return unary(a, "log", [](double v) { return std::log(v); }, [](Node& self) {
    Node& p = parent(self, 0);
    Array& ga = grad_of(p);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] / p.value[i];
  });
}

Var abs(const Var& a) {
  return unary(a, "abs", [](double v) { return std::fabs(v); }, [](Node& self) {
    Node& p = parent(self, 0);
    Array& ga = grad_of(p);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      double x = p.value[i];
      ga[i] += self.grad[i] * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
    }
  });
}

Var square(const Var& a) {
  return unary(a, "square", [](double v) { return v * v; }, [](Node& self) {
    Node& p = parent(self, 0);
    Array& ga = grad_of(p);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * p.value[i] * self.grad[i];
  });
}

Var elu(const Var& a) {
  return unary(a, "elu", [](double v) { return v > 0.0 ? v : std::expm1(v); }, [](Node& self) {
    Node& p = parent(self, 0);
    Array& ga = grad_of(p);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      ga[i] += self.grad[i] * (p.value[i] > 0.0 ? 1.0 : self.value[i] + 1.0);
    }
  });
}

Var relu(const Var& a) {
  return unary(a, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](Node& self) {
    Node& p = parent(self, 0);
    Array& ga = grad_of(p);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (p.value[i] > 0.0) ga[i] += self.grad[i];
    }
  });
}

// ---- reductions ----

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_result(Array::scalar(s), {a}, "sum", [](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    const double g = self.grad[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_result(Array::scalar(s / n), {a}, "mean", [n](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var sum_rows(const Var& a) {
  const Array& x = a.value();
  require_rank2(x, "sum_rows");
  const std::size_t n = x.rows(), k = x.cols();
  Array out({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += x.at(r, c);
    out[r] = s;
  }
  return make_result(std::move(out), {a}, "sum_rows", [n, k](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < k; ++c) ga[r * k + c] += self.grad[r];
  });
}

Var max_rows(const Var& a) {
  const Array& x = a.value();
  require_rank2(x, "max_rows");
  const std::size_t n = x.rows(), k = x.cols();
  Array out({n, 1});
  std::vector<std::size_t> arg(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 1; c < k; ++c) {
      if (x.at(r, c) > x.at(r, arg[r])) arg[r] = c;
    }
    out[r] = x.at(r, arg[r]);
  }
  return make_result(std::move(out), {a}, "max_rows", [arg = std::move(arg), k](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t r = 0; r < arg.size(); ++r) ga[r * k + arg[r]] += self.grad[r];
  });
}

Var logsumexp(const Var& a) {
  const Array& x = a.value();
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x.data()) m = std::max(m, v);
  double s = 0.0;
  for (double v : x.data()) s += std::exp(v - m);
  const double lse = m + std::log(s);
  return make_result(Array::scalar(lse), {a}, "logsumexp", [lse](Node& self) {
    Node& p = parent(self, 0);
    Array& ga = grad_of(p);
    const double g = self.grad[0];
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * std::exp(p.value[i] - lse);
  });
}

// ---- row-wise distributions ----

namespace {
void softmax_rows(const Array& x, Array& out) {
  const std::size_t n = x.rows(), k = x.cols();
  for (std::size_t r = 0; r < n; ++r) {
    double m = x.at(r, 0);
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, x.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      out.at(r, c) = std::exp(x.at(r, c) - m);
      s += out.at(r, c);
    }
    for (std::size_t c = 0; c < k; ++c) out.at(r, c) /= s;
  }
}
}  // namespace

Var softmax(const Var& logits) {
  const Array& x = logits.value();
  require_rank2(x, "softmax");
  Array out = Array::zeros_like(x);
  softmax_rows(x, out);
  return make_result(std::move(out), {logits}, "softmax", [](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    const std::size_t n = self.value.rows(), k = self.value.cols();
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < k; ++c) dot += self.grad.at(r, c) * self.value.at(r, c);
      for (std::size_t c = 0; c < k; ++c) {
        ga.at(r, c) += self.value.at(r, c) * (self.grad.at(r, c) - dot);
      }
    }
  });
}

Var log_softmax(const Var& logits) {
  const Array& x = logits.value();
  require_rank2(x, "log_softmax");
  const std::size_t n = x.rows(), k = x.cols();
  Array out = Array::zeros_like(x);
  for (std::size_t r = 0; r < n; ++r) {
    double m = x.at(r, 0);
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, x.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += std::exp(x.at(r, c) - m);
    const double lse = m + std::log(s);
    for (std::size_t c = 0; c < k; ++c) out.at(r, c) = x.at(r, c) - lse;
  }
  return make_result(std::move(out), {logits}, "log_softmax", [n, k](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t r = 0; r < n; ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < k; ++c) gsum += self.grad.at(r, c);
      for (std::size_t c = 0; c < k; ++c) {
        ga.at(r, c) += self.grad.at(r, c) - std::exp(self.value.at(r, c)) * gsum;
      }
    }
  });
}

Var entropy(const Var& probs) {
  const Array& p = probs.value();
  require_rank2(p, "entropy");
  const std::size_t n = p.rows(), k = p.cols();
  Array out({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    double h = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      const double v = p.at(r, c);
      if (v < 0.0) throw NumericError("entropy: negative probability " + std::to_string(v));
      if (v > 0.0) h -= v * std::log(v);
    }
    out[r] = h;
  }
  return make_result(std::move(out), {probs}, "entropy", [n, k](Node& self) {
    Node& pp = parent(self, 0);
    Array& ga = grad_of(pp);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < k; ++c) {
        const double v = pp.value.at(r, c);
        if (v > 0.0) ga.at(r, c) -= self.grad[r] * (std::log(v) + 1.0);
      }
    }
  });
}

Var cross_entropy(const Var& logits, std::span<const int> targets) {
  const Array& x = logits.value();
  require_rank2(x, "cross_entropy");
  const std::size_t n = x.rows(), k = x.cols();
  if (targets.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     x.shape_string());
  }
  std::vector<int> labels(targets.begin(), targets.end());
  for (int t : labels) {
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw ShapeError("cross_entropy: target " + std::to_string(t) + " outside [0," +
                       std::to_string(k) + ")");
    }
  }
  Array probs = Array::zeros_like(x);
  softmax_rows(x, probs);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double m = x.at(r, 0);
    for (std::size_t c = 1; c < k; ++c) m = std::max(m, x.at(r, c));
    double s = 0.0;
    for (std::size_t c = 0; c < k; ++c) s += std::exp(x.at(r, c) - m);
    total += m + std::log(s) - x.at(r, static_cast<std::size_t>(labels[r]));
  }
  const double dn = static_cast<double>(n);
  return make_result(
      Array::scalar(total / dn), {logits}, "cross_entropy",
      [probs = std::move(probs), labels = std::move(labels), n, k, dn](Node& self) {
        Array& ga = grad_of(parent(self, 0));
        const double g = self.grad[0] / dn;
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < k; ++c) {
            const double y = static_cast<std::size_t>(labels[r]) == c ? 1.0 : 0.0;
            ga.at(r, c) += g * (probs.at(r, c) - y);
          }
        }
      });
}

Var mse(const Var& pred, const Var& target) {
  const Array& p = pred.value();
  const Array& t = target.value();
  if (p.shape() != t.shape()) {
    throw ShapeError("mse: shapes differ, " + p.shape_string() + " vs " + t.shape_string());
  }
  const double n = static_cast<double>(p.rows());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - t[i];
    s += d * d;
  }
  return make_result(Array::scalar(s / n), {pred, target}, "mse", [n](Node& self) {
    Node& pp = parent(self, 0);
    Node& pt = parent(self, 1);
    const double g = 2.0 * self.grad[0] / n;
    if (pp.requires_grad) {
      Array& ga = grad_of(pp);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (pp.value[i] - pt.value[i]);
    }
    if (pt.requires_grad) {
      Array& gb = grad_of(pt);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * (pp.value[i] - pt.value[i]);
    }
  });
}

Var gumbel_softmax(const Var& logits, const Array& gumbel_noise, double temperature) {
  if (!(temperature > 0.0)) {
    throw Error("gumbel_softmax: temperature must be positive, got " + std::to_string(temperature));
  }
  if (gumbel_noise.shape() != logits.value().shape()) {
    throw ShapeError("gumbel_softmax: noise shape " + gumbel_noise.shape_string() +
                     " differs from logits " + logits.value().shape_string());
  }
  return softmax(scale(add(logits, constant(gumbel_noise)), 1.0 / temperature));
}

// ---- structural ----

Var concat_cols(const Var& a, const Var& b) {
  const Array& x = a.value();
  const Array& y = b.value();
  require_rank2(x, "concat_cols");
  require_rank2(y, "concat_cols");
  if (x.rows() != y.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + x.shape_string() + " vs " + y.shape_string());
  }
  const std::size_t n = x.rows(), ka = x.cols(), kb = y.cols();
  Array out({n, ka + kb});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < ka; ++c) out.at(r, c) = x.at(r, c);
    for (std::size_t c = 0; c < kb; ++c) out.at(r, ka + c) = y.at(r, c);
  }
  return make_result(std::move(out), {a, b}, "concat_cols", [n, ka, kb](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      Array& ga = grad_of(pa);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < ka; ++c) ga.at(r, c) += self.grad.at(r, c);
    }
    if (pb.requires_grad) {
      Array& gb = grad_of(pb);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < kb; ++c) gb.at(r, c) += self.grad.at(r, ka + c);
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  const std::size_t k = parts[0].value().cols();
  std::size_t n = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    if (!p.defined() || p.value().empty()) throw Error("concat_rows: operand has not been evaluated");
    require_rank2(p.value(), "concat_rows");
    if (p.value().cols() != k) {
      throw ShapeError("concat_rows: column counts differ, " + parts[0].value().shape_string() +
                       " vs " + p.value().shape_string());
    }
    n += p.value().rows();
    any_grad = any_grad || p.requires_grad();
  }
  Array out({n, k});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(), out.data().begin() + offset);
    offset += p.value().size();
  }
  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->op = "concat_rows";
  if (any_grad) {
    node->requires_grad = true;
    for (const Var& p : parts) node->parents.push_back(p.node());
    node->backward = [](Node& self) {
      std::size_t off = 0;
      for (auto& p : self.parents) {
        const std::size_t m = p->value.size();
        if (p->requires_grad) {
          Array& g = grad_of(*p);
          for (std::size_t i = 0; i < m; ++i) g[i] += self.grad[off + i];
        }
        off += m;
      }
    };
  }
  return Var(std::move(node));
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
  const Array& x = a.value();
  require_rank2(x, "slice_rows");
  if (begin >= end || end > x.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + x.shape_string());
  }
  const std::size_t k = x.cols();
  Array out({end - begin, k});
  std::copy(x.data().begin() + begin * k, x.data().begin() + end * k, out.data().begin());
  return make_result(std::move(out), {a}, "slice_rows", [begin, k](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[begin * k + i] += self.grad[i];
  });
}

Var gather_rows(const Var& a, std::span<const std::size_t> rows) {
  const Array& x = a.value();
  require_rank2(x, "gather_rows");
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t k = x.cols();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Array out({idx.size(), k});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= x.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(idx[i]) + " out of range for " +
                       x.shape_string());
    }
    for (std::size_t c = 0; c < k; ++c) out.at(i, c) = x.at(idx[i], c);
  }
  return make_result(std::move(out), {a}, "gather_rows", [idx = std::move(idx), k](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < k; ++c) ga.at(idx[i], c) += self.grad.at(i, c);
  });
}

Var pick(const Var& a, std::span<const int> index) {
  const Array& x = a.value();
  require_rank2(x, "pick");
  const std::size_t n = x.rows(), k = x.cols();
  if (index.size() != n) {
    throw ShapeError("pick: " + std::to_string(index.size()) + " indices for " + x.shape_string());
  }
  std::vector<int> idx(index.begin(), index.end());
  Array out({n, 1});
  for (std::size_t r = 0; r < n; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= k) {
      throw ShapeError("pick: index " + std::to_string(idx[r]) + " outside [0," + std::to_string(k) + ")");
    }
    out[r] = x.at(r, static_cast<std::size_t>(idx[r]));
  }
  return make_result(std::move(out), {a}, "pick", [idx = std::move(idx)](Node& self) {
    Array& ga = grad_of(parent(self, 0));
    for (std::size_t r = 0; r < idx.size(); ++r) ga.at(r, static_cast<std::size_t>(idx[r])) += self.grad[r];
  });
}

Array one_hot(std::span<const int> labels, std::size_t classes) {
  Array out({labels.size(), classes});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= classes) {
      throw ShapeError("one_hot: label " + std::to_string(labels[r]) + " outside [0," +
                       std::to_string(classes) + ")");
    }
    out.at(r, static_cast<std::size_t>(labels[r])) = 1.0;
  }
  return out;
}

}  // namespace icil::ad
