#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gripcvae/ad/tensor.hpp"

namespace gripcvae::ad {

/// Handle to a node of a Graph.
struct Var {
  std::size_t id = 0;
};

enum class Op : std::uint8_t {
  Leaf,
  MatMul,
  Add,
  AddBias,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Relu,
  Tanh,
  Exp,
  Log,
  Square,
  Sqrt,
  Concat,
  SliceLast,
  MaxOverAxis,
  BroadcastPoints,
  Mean,
  MeanAxis,
  Sum,
  SumAxis,
  GaussianSample,
};

const char* op_name(Op op);

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is already topologically sorted; backward walks it in reverse.
///
/// A Graph is single-use and confined to one thread. Parameters bound with
/// parameter() must outlive the graph; backward() adds into their grad.
template <typename T>
class Graph {
 public:
  Var constant(Tensor<T> value);
  Var parameter(Tensor<T>& param);

  /// a[..., K] x b[K, N] -> [..., N].
  Var matmul(Var a, Var b);
  /// With row-stable products on, each output row of matmul depends only on
  /// its own input row, bit for bit, whatever the row count or position.
  void set_row_stable(bool on) { row_stable_ = on; }
  /// Elementwise for equal shapes; a 1-D `b` matching a's last dimension is
  /// broadcast over all leading dimensions.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T factor);
  Var add_scalar(Var a, T offset);
  /// relu'(0) = 0.
  Var relu(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  /// Throws DomainError for non-positive inputs.
  Var log(Var a);
  Var square(Var a);
  /// Throws DomainError for negative inputs; the derivative at 0 is taken as 0.
  Var sqrt(Var a);
  /// Concatenation along `axis`; all other dimensions must agree.
  Var concat(std::span<const Var> parts, std::size_t axis);
  /// Columns [begin, end) of the last dimension.
  Var slice_last(Var a, std::size_t begin, std::size_t end);
  /// Max-reduction over `axis`; the gradient is routed to the first maximum.
  Var max_over_points(Var a, std::size_t axis = 1);
  /// [B, C] -> [B, P, C], repeating each row P times.
  Var broadcast_points(Var a, std::size_t points);
  Var mean(Var a);
  Var mean(Var a, std::size_t axis);
  Var sum(Var a);
  Var sum(Var a, std::size_t axis);
  /// mu + exp(logvar / 2) * noise, with noise supplied by the caller.
  Var gaussian_sample(Var mu, Var logvar, Var noise);

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node. Node
  /// gradients are reset first; parameter gradients accumulate.
  void backward(Var loss);

  const Tensor<T>& value(Var v) const { return nodes_[v.id].value; }
  const Shape& shape(Var v) const { return nodes_[v.id].value.shape; }
  /// Gradient of the last backward() w.r.t. this node; empty if unreachable.
  const std::vector<T>& grad(Var v) const { return nodes_[v.id].grad; }

  void set_name(Var v, std::string name) { nodes_[v.id].name = std::move(name); }
  /// Throws DomainError naming the first node holding a NaN or infinity.
  void check_finite() const;

  std::size_t size() const { return nodes_.size(); }
  Op op(Var v) const { return nodes_[v.id].op; }

 private:
  struct Node {
    Op op = Op::Leaf;
    std::array<std::size_t, 3> inputs{};
    std::uint8_t input_count = 0;
    Tensor<T> value;
    std::vector<T> grad;
    bool needs_grad = false;
    Tensor<T>* param = nullptr;
    std::vector<std::uint32_t> argmax;
    T scalar = T(0);
    std::size_t axis = 0;
    std::size_t aux = 0;
    std::vector<std::size_t> extra_inputs;
    std::string name;
  };

  Var push(Node node);
  Var unary(Op op, Var a, Tensor<T> out);
  std::vector<T>& grad_buffer(std::size_t id);
  void backward_node(std::size_t id);
  std::string describe(std::size_t id) const;

  std::vector<Node> nodes_;
  bool row_stable_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace gripcvae::ad
