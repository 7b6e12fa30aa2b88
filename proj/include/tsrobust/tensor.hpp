#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tsrobust/errors.hpp"

namespace tsrobust {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

// Handle into a recording Graph. Cheap to copy; valid while the graph lives.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  std::span<const double> values() const;
  // Gradient of the recorded loss w.r.t. this tensor; valid after backward()
  // on a graph that tracks it.
  std::span<const double> grad() const;
  bool tracked() const;
  double scalar() const;

  int id() const { return id_; }
  Graph* graph() const { return graph_; }

 private:
  friend class Graph;
  Tensor(Graph* g, int id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

enum class Padding { Zero, Replicate };

// Tape of one forward recording. Nodes are stored in emission order, which
// is a topological order by construction. One backward pass per recording;
// a new forward pass needs a new Graph.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor leaf(Shape shape, std::vector<double> values, bool track);
  Tensor constant(Shape shape, std::vector<double> values);
  Tensor scalar_constant(double value);

  // Reverse topological traversal from `loss` (a scalar), accumulating
  // gradients into every tracked node. Throws GraphError on a second call.
  void backward(const Tensor& loss);

  std::size_t num_nodes() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized iff tracked
    bool tracked = false;
    bool is_leaf = false;
    // Called with (graph, own id); pushes this node's grad into its parents.
    std::function<void(Graph&, int)> backward_fn;
  };

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  // Emits a new node; value moved in, grad allocated iff tracked.
  Tensor emit(Shape shape, std::vector<double> value, bool tracked,
              std::function<void(Graph&, int)> backward_fn);

  void check_owns(const Tensor& t, const char* op) const;

 private:
  std::vector<Node> nodes_;
  std::vector<int> leaves_;
  bool consumed_ = false;
};

// ---- recorded operations (inputs must share one graph) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double c);
Tensor reshape(const Tensor& a, Shape target);

// Same-length cross-correlation of input [batch, ch_in, k] with kernels
// [ch_out, ch_in, w]; pad total w-1 split floor left / ceil right.
Tensor conv1d(const Tensor& input, const Tensor& kernels, Padding padding);
// x [batch, ch, k] plus per-channel bias [ch].
Tensor channel_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
// Mean over the time axis: [batch, ch, k] -> [batch, ch].
Tensor global_avg_pool(const Tensor& x);
// x [batch, n] * weight [m, n]^T + bias [m] -> [batch, m].
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Row-wise softmax with temperature; max-subtraction for stability.
Tensor softmax_t(const Tensor& logits, double temperature);
// Mean over the batch of -log(prob of label), log clamped at log(1e-12).
Tensor cross_entropy(const Tensor& probs, std::span<const int> labels);
// Soft-target variant: mean of -sum(target * log(prob)) per row.
Tensor cross_entropy(const Tensor& probs, const std::vector<double>& soft_targets);

// Elementwise log(max(x, floor)); zero gradient in the clamped region.
Tensor log_clamped(const Tensor& x, double floor = 1e-12);
Tensor sum(const Tensor& x);
Tensor sum_squares(const Tensor& x);
// Sum over rows of squared first differences along the last axis.
Tensor roughness(const Tensor& x);
// logits [batch, C] -> [batch]: the logit of classes[b].
Tensor pick_class(const Tensor& logits, std::span<const int> classes);
// logits [batch, C] -> [batch]: max over j != classes[b]; ties to lowest j.
Tensor max_excluding(const Tensor& logits, std::span<const int> classes);

void backward(const Tensor& loss);

}  // namespace tsrobust
