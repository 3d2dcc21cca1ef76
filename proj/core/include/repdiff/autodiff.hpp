#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "repdiff/tensor.hpp"

namespace repdiff {

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid as long as the Graph lives.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  const Tensor& grad() const;
  std::size_t id() const { return id_; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : g_(g), id_(id) {}
  Graph* g_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are recorded in creation order, which is a
/// topological order; backward walks it once in reverse. Single-threaded;
/// independent graphs may live on different threads.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value);

  // elementwise / arithmetic
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var add_rowvec(Var m, Var row);    // [B,C] + [C], broadcast over rows
  Var scale_rows(Var m, Var v);      // [B,C] rows scaled by v[B]

  // linear algebra
  Var matmul(Var a, Var b);

  // reductions
  Var sum(Var a);
  Var mean(Var a);
  Var sum_axis(Var a, int axis);
  Var mean_axis(Var a, int axis);

  // nonlinearities
  Var tanh(Var a);
  Var silu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);  // gradient is unbounded at 0; callers own that edge

  // structure
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t c0, std::size_t c1);
  Var reshape(Var a, std::vector<std::size_t> shape);
  Var gather_rows(Var table, std::vector<int> idx);

  // geometry
  Var l2_normalize(Var a);              // vector, or per-row for matrices
  Var cosine_similarity(Var a, Var b);  // vectors -> scalar, matrices -> [B]

  /// Reverse pass from a scalar root. Throws if root is not a scalar.
  void backward(const Var& root);

  const Tensor& value(const Var& v) const { return nodes_[v.id_].value; }
  const Tensor& grad(const Var& v) const { return nodes_[v.id_].grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Graph&, std::size_t)> back;  // nullptr for leaves
  };

  Var emit(Tensor value, std::function<void(Graph&, std::size_t)> back);
  Tensor& grad_of(std::size_t id) { return nodes_[id].grad; }
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }

  std::vector<Node> nodes_;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool unreliable = false;   // finite differences failed to converge; see note
  std::string note;
};

/// f builds a scalar expression for a given leaf. Compares reverse-mode
/// gradients against central finite differences with the given step and
/// returns max over coordinates of |ad - fd| / max(1, |fd|).
using ScalarFn = std::function<Var(Graph&, Var)>;
GradCheckReport grad_check(const ScalarFn& f, const Tensor& point, double step);

}  // namespace repdiff
