#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "icil/ad/array.hpp"

namespace icil::ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of a define-by-run differentiation graph. Values are computed
// eagerly when the node is created; `backward` holds the vector-Jacobian
// product that pushes this node's grad into its parents.
struct Node {
  Array value;
  Array grad;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";
  bool requires_grad = false;
};

// Handle to a graph node. Cheap to copy; copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Array& value() const;
  const Array& grad() const;
  Array& mutable_value();
  Array& mutable_grad();
  bool requires_grad() const;
  const char* op() const;
  const Shape& shape() const { return value().shape(); }
  bool defined() const noexcept { return node_ != nullptr; }
  const NodePtr& node() const noexcept { return node_; }

 private:
  NodePtr node_;
};

// Leaf constructors. Leaves reject non-finite payloads.
Var constant(Array value);
Var parameter(Array value);

// Ω: passes the value through and blocks the gradient.
Var stop_gradient(const Var& x);

// Graph-evaluation entry points. The graph is evaluated as it is built, so
// `forward` returns the root's value and fails only for an unevaluated root.
Array forward(const Var& root);

// Seeds d(root)/d(root) = 1 and propagates to every node reachable through
// gradient-carrying edges. Parameter leaves accumulate; interior grads are
// reset first so repeated calls on the same graph are well defined.
void backward(const Var& root);

// ---- linear algebra and elementwise ----
Var matmul(const Var& a, const Var& b);
// x·w + b with b a [1,k] row; one node instead of matmul + broadcast add.
Var affine(const Var& x, const Var& w, const Var& b);
// Broadcasting for add/sub/mul: identical shapes, a [1,k] row against [n,k],
// or a single-element operand against anything.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var abs(const Var& a);
Var square(const Var& a);
Var elu(const Var& a);
Var relu(const Var& a);

// ---- reductions ----
Var sum(const Var& a);       // -> [1]
Var mean(const Var& a);      // -> [1]
Var sum_rows(const Var& a);  // [n,k] -> [n,1]
Var max_rows(const Var& a);  // [n,k] -> [n,1]; gradient goes to the first maximiser
Var logsumexp(const Var& a); // over all elements -> [1]

// ---- row-wise distributions ----
Var softmax(const Var& logits);
Var log_softmax(const Var& logits);
// -sum_k p_k log p_k per row, [n,k] -> [n,1]; 0 log 0 taken as 0.
Var entropy(const Var& probs);
// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(const Var& logits, std::span<const int> targets);
// Mean over rows of the squared L2 distance between pred and target rows.
Var mse(const Var& pred, const Var& target);
// softmax((logits + gumbel_noise) / temperature), noise held constant.
Var gumbel_softmax(const Var& logits, const Array& gumbel_noise, double temperature);

// ---- structural ----
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t begin, std::size_t end);
Var gather_rows(const Var& a, std::span<const std::size_t> rows);
// out[i] = a[i, index[i]], [n,k] -> [n,1]
Var pick(const Var& a, std::span<const int> index);

Array one_hot(std::span<const int> labels, std::size_t classes);

}  // namespace icil::ad
