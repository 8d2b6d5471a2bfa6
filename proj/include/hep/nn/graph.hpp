#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hep/nn/param.hpp"

namespace hep::nn {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel(shape), T(0)) {}
  Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {}

  static std::size_t numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
  }
  std::size_t size() const { return data.size(); }
  int dim(std::size_t i) const { return shape[i]; }
  int rank() const { return static_cast<int>(shape.size()); }
};

struct Var {
  int id = -1;
};

enum class Padding { Zero, Circular };

std::string to_string(Padding p);
Padding padding_from_string(const std::string& s);

/// Reverse-mode tape. Nodes are appended in topological order; backward walks
/// them in reverse. Parameters enter through param(), which applies the
/// parameter's tying projection, and receive their gradient (in double, after
/// the adjoint of the projection) from accumulate_param_grads().
///
/// Shapes: row tensors are [N, C] row-major; grids are [C, Z, Y, X].
template <typename T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;  // backward closures capture `this`
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<T> value);
  Var leaf(Tensor<T> value);  // differentiable input
  Var param(Parameter& p);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  const Tensor<T>& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1. Throws InvalidArgument unless loss is scalar.
  void backward(Var loss);
  /// Adds parameter gradients into Parameter::grad.
  void accumulate_param_grads();

  // --- ops -----------------------------------------------------------------
  /// y = x W^T + b; x [N, Cin], W [Cout, Cin], b [Cout] (optional, id -1).
  Var linear(Var x, Var w, Var b);
  Var silu(Var x);
  Var add(Var a, Var b);
  Var scale(Var x, double s);
  Var reshape(Var x, std::vector<int> shape);
  /// Concatenation along dimension 0 (rows of [N, C], channels of grids).
  Var concat0(const std::vector<Var>& xs);
  /// Column concatenation of [N, Ci] tensors.
  Var concat_cols(const std::vector<Var>& xs);
  /// y[:, j] = x[:, perm[j]].
  Var permute_cols(Var x, std::vector<int> perm);
  /// Max over row segments [offsets[s], offsets[s+1]); every segment non-empty.
  Var segment_max(Var x, std::vector<int> offsets);
  /// Rows of x [S, C] placed at voxel positions `cells` of a [C, dims] grid.
  Var scatter_rows(Var x, std::vector<int> cells, std::array<int, 3> zyx);
  /// Cross-correlation; x [Cin, Z, Y, X], w [Cout, Cin, k, k, k], b [Cout].
  Var conv3d(Var x, Var w, Var b, Padding pad);
  Var avgpool2(Var x);
  Var upsample2(Var x);
  /// -log softmax(x)[target] over all entries of x.
  Var cross_entropy(Var logits, std::size_t target);
  /// mean((x - target)^2) over all entries.
  Var mse(Var x, const Tensor<T>& target);
  Var sum_squares(Var x);
  Var sum(const std::vector<Var>& scalars);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Tensor<T> value, bool requires_grad);
  bool needs(Var v) const { return v.id >= 0 && nodes_[v.id].requires_grad; }
  Tensor<T>& g(Var v);  // lazily allocated gradient buffer

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, int> param_nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace hep::nn
