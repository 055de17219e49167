#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "sde/numcore/parameter.hpp"

namespace sde {

/// Handle to a node of a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over a fixed set of matrix ops.
///
/// Nodes are appended in evaluation order, so reverse iteration is a valid
/// topological order for backpropagation. Parameters enter as leaves whose
/// gradients are flushed into Parameter::grad at the end of backward().
/// A graph built with `record_gradients = false` keeps values only.
template <typename Scalar>
class Graph {
 public:
  using Mat = Matrix<Scalar>;
  using Backward = std::function<void(Graph&, const Mat& out_grad)>;

  explicit Graph(bool record_gradients = true) : record_(record_gradients) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Mat value) {
    nodes_.push_back(Node{std::move(value), nullptr, {}, false, false, {}});
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  /// Leaf for a dense parameter; repeated calls return the same node.
  Var parameter(Parameter<Scalar>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return it->second;
    nodes_.push_back(Node{Mat{}, &p, {}, record_, false, {}});
    Var v{static_cast<int>(nodes_.size() - 1)};
    param_nodes_.emplace(&p, v);
    return v;
  }

  /// Appends an op result. `back` receives the output gradient and must
  /// accumulate into the inputs that need it.
  Var record(Mat value, bool needs_grad, Backward back) {
    const bool keep = record_ && needs_grad;
    nodes_.push_back(Node{std::move(value), nullptr, {}, keep, false, keep ? std::move(back) : Backward{}});
    return Var{static_cast<int>(nodes_.size() - 1)};
  }

  const Mat& value(Var v) const {
    const auto& n = node(v);
    return n.param ? n.param->value : n.value;
  }

  Scalar scalar(Var v) const {
    const auto& m = value(v);
    if (m.rows() != 1 || m.cols() != 1) throw std::invalid_argument("node is not a scalar");
    return m(0, 0);
  }

  bool needs_grad(Var v) const { return node(v).needs_grad; }
  bool any_needs_grad(std::initializer_list<Var> vars) const {
    for (auto v : vars)
      if (needs_grad(v)) return true;
    return false;
  }

  /// Gradient buffer of a node, zero-initialized on first access.
  Mat& grad(Var v) {
    auto& n = node(v);
    if (!n.grad_ready) {
      const auto& val = n.param ? n.param->value : n.value;
      n.grad = Mat::Zero(val.rows(), val.cols());
      n.grad_ready = true;
    }
    return n.grad;
  }

  /// Seeds d(root)/d(root) = 1 and propagates to every recorded input.
  void backward(Var root) {
    if (!record_) throw std::logic_error("backward() on a graph built without gradient recording");
    if (value(root).size() != 1) throw std::invalid_argument("backward() needs a scalar root");
    grad(root).setOnes();
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (!n.needs_grad || !n.grad_ready) continue;
      if (n.backward) n.backward(*this, n.grad);
    }
    for (auto& n : nodes_) {
      if (n.param && n.grad_ready) n.param->grad += n.grad;
    }
  }

 private:
  struct Node {
    Mat value;
    Parameter<Scalar>* param;
    Mat grad;
    bool needs_grad;
    bool grad_ready;
    Backward backward;
  };

  Node& node(Var v) {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("invalid graph node");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw std::out_of_range("invalid graph node");
    return nodes_[v.id];
  }

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<Scalar>*, Var> param_nodes_;
};

}  // namespace sde
