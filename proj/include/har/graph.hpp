#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "har/tensor.hpp"

namespace har {

class Graph;

// Handle to a node on a Graph's tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Probability clamp floor applied before any log.
inline constexpr double kProbFloor = 1e-12;

// Reverse-mode tape for one forward/backward pass. Nodes are appended
// in topological order by construction; backward walks the tape once in
// reverse. One Graph is single-threaded; distinct Graphs are
// independent.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int node_id)>;

  Var leaf(Tensor value, bool requires_grad = false);

  // Registers an operation node. `backward` may be empty when no input
  // requires a gradient; it receives the graph and the node's own id
  // and accumulates into the inputs' gradient buffers.
  Var node(Tensor value, const std::vector<Var>& inputs, BackwardFn backward,
           const char* op = "op");

  const Tensor& value(Var v) const { return rec(v).value; }
  bool requires_grad(Var v) const { return rec(v).requires_grad; }
  bool has_grad(Var v) const { return !rec(v).grad.empty(); }
  const Tensor& grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and propagates through the tape.
  // Throws ContractError on a non-scalar loss and StateError when
  // called twice without reset_grads().
  void backward(Var loss);
  void reset_grads();

  // Adds g into v's gradient buffer; no-op for constant nodes.
  void accumulate(Var v, std::span<const double> g);

  std::size_t node_count() const { return nodes_.size(); }
  const char* op_name(Var v) const { return rec(v).op; }

 private:
  struct NodeRec {
    Tensor value;
    Tensor grad;  // empty until a gradient reaches the node
    bool requires_grad = false;
    std::vector<int> inputs;
    BackwardFn backward;
    const char* op = "leaf";
  };

  NodeRec& rec(Var v);
  const NodeRec& rec(Var v) const;

  std::vector<NodeRec> nodes_;
  bool backward_done_ = false;
};

// Differentiable primitives. Shapes follow the usual batch-rows
// convention: x is [n, d], weights [d, m], bias [m], probabilities
// [n, c].
Var affine(Graph& g, Var x, Var w, Var b);
Var relu(Graph& g, Var x);
Var softmax(Graph& g, Var logits);
Var cross_entropy(Graph& g, Var probs, std::vector<int> labels);
Var kl_divergence(Graph& g, Var p, Var q);
Var add(Graph& g, Var a, Var b);      // same-shape elementwise
Var scale(Graph& g, Var a, double c);
Var sum(Graph& g, Var a);             // scalar

}  // namespace har
