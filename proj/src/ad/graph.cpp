#include "gripcvae/ad/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "gripcvae/errors.hpp"

namespace gripcvae::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel(shape))
    throw DimensionError("tensor of shape " + shape_string(shape) + " given " +
                         std::to_string(data.size()) + " values");
}

template struct Tensor<float>;
template struct Tensor<double>;

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::AddBias: return "add_bias";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Relu: return "relu";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Sqrt: return "sqrt";
    case Op::Concat: return "concat";
    case Op::SliceLast: return "slice_last";
    case Op::MaxOverAxis: return "max_over_points";
    case Op::BroadcastPoints: return "broadcast_points";
    case Op::Mean: return "mean";
    case Op::MeanAxis: return "mean_axis";
    case Op::Sum: return "sum";
    case Op::SumAxis: return "sum_axis";
    case Op::GaussianSample: return "gaussian_sample";
  }
  return "?";
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;

// Every output entry is a chain of fused multiply-adds over k in order,
// starting from zero. fma rounds exactly once, so the vector tiles and the
// scalar fallback agree bit for bit.
template <typename T>
void row_stable_matmul_scalar(const T* x, const T* w, T* out, std::size_t r, std::size_t k, std::size_t c) {
  for (std::size_t i = 0; i < r; ++i) {
    T* o = out + i * c;
    std::fill(o, o + c, T(0));
    for (std::size_t p = 0; p < k; ++p) {
      const T xv = x[i * k + p];
      const T* wr = w + p * c;
      for (std::size_t j = 0; j < c; ++j) o[j] = std::fma(xv, wr[j], o[j]);
    }
  }
}

#if defined(__AVX512F__)
template <int R>
inline void fma_tile(const float* x, std::size_t k, const float* w, std::size_t ldw, float* out, std::size_t ldo,
                     std::size_t cols) {
  const __mmask16 m0 = cols >= 16 ? 0xFFFF : static_cast<__mmask16>((1u << cols) - 1);
  const __mmask16 m1 = cols >= 32 ? 0xFFFF : cols <= 16 ? 0 : static_cast<__mmask16>((1u << (cols - 16)) - 1);
  __m512 a0[R], a1[R];
  for (int i = 0; i < R; ++i) a0[i] = a1[i] = _mm512_setzero_ps();
  for (std::size_t p = 0; p < k; ++p) {
    const __m512 w0 = _mm512_maskz_loadu_ps(m0, w + p * ldw);
    const __m512 w1 = _mm512_maskz_loadu_ps(m1, w + p * ldw + 16);
    for (int i = 0; i < R; ++i) {
      const __m512 xv = _mm512_set1_ps(x[i * k + p]);
      a0[i] = _mm512_fmadd_ps(xv, w0, a0[i]);
      a1[i] = _mm512_fmadd_ps(xv, w1, a1[i]);
    }
  }
  for (int i = 0; i < R; ++i) {
    _mm512_mask_storeu_ps(out + i * ldo, m0, a0[i]);
    _mm512_mask_storeu_ps(out + i * ldo + 16, m1, a1[i]);
  }
}

void row_stable_matmul(const float* x, const float* w, float* out, std::size_t r, std::size_t k, std::size_t c) {
  constexpr int kRows = 8;
  for (std::size_t j = 0; j < c; j += 32) {
    const std::size_t cols = std::min<std::size_t>(32, c - j);
    std::size_t i = 0;
    for (; i + kRows <= r; i += kRows) fma_tile<kRows>(x + i * k, k, w + j, c, out + i * c + j, c, cols);
    for (; i < r; ++i) fma_tile<1>(x + i * k, k, w + j, c, out + i * c + j, c, cols);
  }
}
#else
void row_stable_matmul(const float* x, const float* w, float* out, std::size_t r, std::size_t k, std::size_t c) {
  row_stable_matmul_scalar(x, w, out, r, k, c);
}
#endif

void row_stable_matmul(const double* x, const double* w, double* out, std::size_t r, std::size_t k, std::size_t c) {
  row_stable_matmul_scalar(x, w, out, r, k, c);
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace

template <typename T>
Var Graph<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  Node n;
  n.op = Op::Leaf;
  value.requires_grad = false;
  value.grad.clear();
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::parameter(Tensor<T>& param) {
  Node n;
  n.op = Op::Leaf;
  n.value.shape = param.shape;
  n.value.data = param.data;
  n.param = &param;
  n.needs_grad = param.requires_grad;
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::unary(Op op, Var a, Tensor<T> out) {
  Node n;
  n.op = op;
  n.inputs[0] = a.id;
  n.input_count = 1;
  n.needs_grad = nodes_[a.id].needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  const Tensor<T>& x = value(a);
  const Tensor<T>& w = value(b);
  if (w.rank() != 2 || x.rank() == 0 || x.cols() != w.shape[0])
    throw DimensionError("matmul: shape mismatch " + shape_string(x.shape) + " x " + shape_string(w.shape));
  Shape out_shape = x.shape;
  out_shape.back() = w.shape[1];
  Tensor<T> out(out_shape);
  const auto r = static_cast<Eigen::Index>(x.rows());
  const auto k = static_cast<Eigen::Index>(x.cols());
  const auto c = static_cast<Eigen::Index>(w.shape[1]);
  if (row_stable_)
    row_stable_matmul(x.data.data(), w.data.data(), out.data.data(), x.rows(), x.cols(), w.shape[1]);
  else
    MMap<T>(out.data.data(), r, c).noalias() = CMap<T>(x.data.data(), r, k) * CMap<T>(w.data.data(), k, c);
  Node n;
  n.op = Op::MatMul;
  n.inputs = {a.id, b.id, 0};
  n.input_count = 2;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value = std::move(out);
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  const Tensor<T>& x = value(a);
  const Tensor<T>& y = value(b);
  Node n;
  n.inputs = {a.id, b.id, 0};
  n.input_count = 2;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  if (x.shape == y.shape) {
    n.op = Op::Add;
    n.value = Tensor<T>(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] + y.data[i];
  } else if (y.rank() == 1 && x.rank() >= 1 && y.shape[0] == x.cols()) {
    n.op = Op::AddBias;
    n.value = Tensor<T>(x.shape);
    const std::size_t cols = x.cols();
    for (std::size_t r = 0, i = 0; r < x.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c, ++i) n.value.data[i] = x.data[i] + y.data[c];
  } else {
    throw DimensionError("add: shape mismatch " + shape_string(x.shape) + " vs " + shape_string(y.shape));
  }
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  const Tensor<T>& x = value(a);
  const Tensor<T>& y = value(b);
  require_same(x.shape, y.shape, "sub");
  Node n;
  n.op = Op::Sub;
  n.inputs = {a.id, b.id, 0};
  n.input_count = 2;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value = Tensor<T>(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] - y.data[i];
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  const Tensor<T>& x = value(a);
  const Tensor<T>& y = value(b);
  require_same(x.shape, y.shape, "mul");
  Node n;
  n.op = Op::Mul;
  n.inputs = {a.id, b.id, 0};
  n.input_count = 2;
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value = Tensor<T>(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) n.value.data[i] = x.data[i] * y.data[i];
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::scale(Var a, T factor) {
  Tensor<T> out = Tensor<T>(value(a).shape);
  const auto& x = value(a).data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = factor * x[i];
  Var v = unary(Op::Scale, a, std::move(out));
  nodes_[v.id].scalar = factor;
  return v;
}

template <typename T>
Var Graph<T>::add_scalar(Var a, T offset) {
  Tensor<T> out = Tensor<T>(value(a).shape);
  const auto& x = value(a).data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x[i] + offset;
  return unary(Op::AddScalar, a, std::move(out));
}

template <typename T>
Var Graph<T>::relu(Var a) {
  Tensor<T> out = Tensor<T>(value(a).shape);
  const auto& x = value(a).data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x[i] > T(0) ? x[i] : T(0);
  return unary(Op::Relu, a, std::move(out));
}

template <typename T>
Var Graph<T>::tanh(Var a) {
  Tensor<T> out = Tensor<T>(value(a).shape);
  const auto& x = value(a).data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = std::tanh(x[i]);
  return unary(Op::Tanh, a, std::move(out));
}

template <typename T>
Var Graph<T>::exp(Var a) {
  Tensor<T> out = Tensor<T>(value(a).shape);
  const auto& x = value(a).data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = std::exp(x[i]);
  return unary(Op::Exp, a, std::move(out));
}

template <typename T>
Var Graph<T>::log(Var a) {
  Tensor<T> out = Tensor<T>(value(a).shape);
  const auto& x = value(a).data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > T(0)))
      throw DomainError("log of non-positive value " + std::to_string(x[i]) + " at index " + std::to_string(i));
    out.data[i] = std::log(x[i]);
  }
  return unary(Op::Log, a, std::move(out));
}

template <typename T>
Var Graph<T>::square(Var a) {
  Tensor<T> out = Tensor<T>(value(a).shape);
  const auto& x = value(a).data;
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x[i] * x[i];
  return unary(Op::Square, a, std::move(out));
}

template <typename T>
Var Graph<T>::sqrt(Var a) {
  Tensor<T> out = Tensor<T>(value(a).shape);
  const auto& x = value(a).data;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < T(0))
      throw DomainError("sqrt of negative value " + std::to_string(x[i]) + " at index " + std::to_string(i));
    out.data[i] = std::sqrt(x[i]);
  }
  return unary(Op::Sqrt, a, std::move(out));
}

template <typename T>
Var Graph<T>::concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = value(parts[0]).shape;
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  Node n;
  n.op = Op::Concat;
  n.axis = axis;
  for (Var p : parts) {
    const Shape& s = value(p).shape;
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw DimensionError("concat: shape mismatch " + shape_string(first) + " vs " + shape_string(s));
    out_shape[axis] += s[axis];
    n.extra_inputs.push_back(p.id);
    n.needs_grad = n.needs_grad || nodes_[p.id].needs_grad;
  }
  n.value = Tensor<T>(out_shape);
  const AxisSplit os = split_axis(out_shape, axis);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor<T>& x = value(p);
    const std::size_t block = x.shape[axis] * os.inner;
    for (std::size_t o = 0; o < os.outer; ++o)
      std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(o * block), block,
                  n.value.data.begin() + static_cast<std::ptrdiff_t>(o * os.len * os.inner + offset));
    offset += block;
  }
  return push(std::move(n));
}

template <typename T>
Var Graph<T>::slice_last(Var a, std::size_t begin, std::size_t end) {
  const Tensor<T>& x = value(a);
  if (x.rank() == 0 || begin >= end || end > x.cols())
    throw DimensionError("slice_last: [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(x.shape));
  Shape out_shape = x.shape;
  out_shape.back() = end - begin;
  Tensor<T> out(out_shape);
  const std::size_t cols = x.cols();
  const std::size_t w = end - begin;
  for (std::size_t r = 0; r < x.rows(); ++r)
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(r * cols + begin), w,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * w));
  Var v = unary(Op::SliceLast, a, std::move(out));
  nodes_[v.id].axis = begin;
  return v;
}

template <typename T>
Var Graph<T>::max_over_points(Var a, std::size_t axis) {
  const Tensor<T>& x = value(a);
  const AxisSplit s = split_axis(x.shape, axis);
  if (s.len == 0) throw DimensionError("max_over_points: empty axis in " + shape_string(x.shape));
  Tensor<T> out(drop_axis(x.shape, axis));
  std::vector<std::uint32_t> argmax(out.size(), 0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    const T* base = x.data.data() + o * s.len * s.inner;
    T* dst = out.data.data() + o * s.inner;
    std::uint32_t* arg = argmax.data() + o * s.inner;
    std::copy_n(base, s.inner, dst);
    for (std::size_t p = 1; p < s.len; ++p) {
      const T* row = base + p * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) {
        if (row[i] > dst[i]) {  // strict: ties keep the lowest index
          dst[i] = row[i];
          arg[i] = static_cast<std::uint32_t>(p);
        }
      }
    }
  }
  Var v = unary(Op::MaxOverAxis, a, std::move(out));
  nodes_[v.id].argmax = std::move(argmax);
  nodes_[v.id].axis = axis;
  return v;
}

template <typename T>
Var Graph<T>::broadcast_points(Var a, std::size_t points) {
  const Tensor<T>& x = value(a);
  if (x.rank() != 2) throw DimensionError("broadcast_points: expected [B, C], got " + shape_string(x.shape));
  const std::size_t b = x.shape[0];
  const std::size_t c = x.shape[1];
  Tensor<T> out(Shape{b, points, c});
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t p = 0; p < points; ++p)
      std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(i * c), c,
                  out.data.begin() + static_cast<std::ptrdiff_t>((i * points + p) * c));
  Var v = unary(Op::BroadcastPoints, a, std::move(out));
  nodes_[v.id].aux = points;
  return v;
}

template <typename T>
Var Graph<T>::sum(Var a) {
  const auto& x = value(a).data;
  T acc = T(0);
  for (T v : x) acc += v;
  return unary(Op::Sum, a, Tensor<T>(Shape{}, std::vector<T>{acc}));
}

template <typename T>
Var Graph<T>::mean(Var a) {
  const auto& x = value(a).data;
  if (x.empty()) throw DimensionError("mean of an empty tensor");
  T acc = T(0);
  for (T v : x) acc += v;
  return unary(Op::Mean, a, Tensor<T>(Shape{}, std::vector<T>{acc / static_cast<T>(x.size())}));
}

template <typename T>
Var Graph<T>::sum(Var a, std::size_t axis) {
  const Tensor<T>& x = value(a);
  const AxisSplit s = split_axis(x.shape, axis);
  Tensor<T> out(drop_axis(x.shape, axis));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t p = 0; p < s.len; ++p)
      for (std::size_t i = 0; i < s.inner; ++i)
        out.data[o * s.inner + i] += x.data[(o * s.len + p) * s.inner + i];
  Var v = unary(Op::SumAxis, a, std::move(out));
  nodes_[v.id].axis = axis;
  return v;
}

template <typename T>
Var Graph<T>::mean(Var a, std::size_t axis) {
  const Tensor<T>& x = value(a);
  const AxisSplit s = split_axis(x.shape, axis);
  if (s.len == 0) throw DimensionError("mean over an empty axis");
  Tensor<T> out(drop_axis(x.shape, axis));
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t p = 0; p < s.len; ++p)
      for (std::size_t i = 0; i < s.inner; ++i)
        out.data[o * s.inner + i] += x.data[(o * s.len + p) * s.inner + i];
  const T inv = T(1) / static_cast<T>(s.len);
  for (T& v : out.data) v *= inv;
  Var v = unary(Op::MeanAxis, a, std::move(out));
  nodes_[v.id].axis = axis;
  return v;
}

template <typename T>
Var Graph<T>::gaussian_sample(Var mu, Var logvar, Var noise) {
  const Tensor<T>& m = value(mu);
  const Tensor<T>& lv = value(logvar);
  const Tensor<T>& eps = value(noise);
  require_same(m.shape, lv.shape, "gaussian_sample");
  require_same(m.shape, eps.shape, "gaussian_sample");
  Node n;
  n.op = Op::GaussianSample;
  n.inputs = {mu.id, logvar.id, noise.id};
  n.input_count = 3;
  n.needs_grad = nodes_[mu.id].needs_grad || nodes_[logvar.id].needs_grad || nodes_[noise.id].needs_grad;
  n.value = Tensor<T>(m.shape);
  for (std::size_t i = 0; i < m.size(); ++i)
    n.value.data[i] = m.data[i] + std::exp(T(0.5) * lv.data[i]) * eps.data[i];
  return push(std::move(n));
}

template <typename T>
std::vector<T>& Graph<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

template <typename T>
void Graph<T>::backward(Var loss) {
  if (value(loss).size() != 1)
    throw DimensionError("backward: loss must be a scalar, got shape " + shape_string(value(loss).shape));
  for (Node& n : nodes_) n.grad.clear();
  grad_buffer(loss.id)[0] = T(1);
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.op == Op::Leaf) {
      if (n.param != nullptr && n.param->requires_grad) {
        n.param->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
      }
      continue;
    }
    backward_node(id);
  }
}

template <typename T>
void Graph<T>::backward_node(std::size_t id) {
  // Copy out what we need: grad_buffer() may grow other nodes but never this one.
  const Node& n = nodes_[id];
  const std::vector<T>& g = n.grad;
  const auto needs = [&](std::size_t k) { return nodes_[n.inputs[k]].needs_grad; };
  const auto in_value = [&](std::size_t k) -> const Tensor<T>& { return nodes_[n.inputs[k]].value; };
  const auto pass_through = [&](std::size_t target) {
    std::vector<T>& dst = nodes_[target].grad;
    if (dst.empty()) {
      dst = g;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::MatMul: {
      const Tensor<T>& x = in_value(0);
      const Tensor<T>& w = in_value(1);
      const auto r = static_cast<Eigen::Index>(x.rows());
      const auto k = static_cast<Eigen::Index>(x.cols());
      const auto c = static_cast<Eigen::Index>(w.shape[1]);
      const CMap<T> gm(g.data(), r, c);
      if (needs(0)) {
        MMap<T>(grad_buffer(n.inputs[0]).data(), r, k).noalias() += gm * CMap<T>(w.data.data(), k, c).transpose();
      }
      if (needs(1)) {
        MMap<T>(grad_buffer(n.inputs[1]).data(), k, c).noalias() += CMap<T>(x.data.data(), r, k).transpose() * gm;
      }
      break;
    }
    case Op::Add:
    case Op::Sub: {
      const T sign = n.op == Op::Sub ? T(-1) : T(1);
      if (needs(0)) pass_through(n.inputs[0]);
      if (needs(1)) {
        auto& gb = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
      }
      break;
    }
    case Op::AddBias: {
      if (needs(0)) pass_through(n.inputs[0]);
      if (needs(1)) {
        auto& gb = grad_buffer(n.inputs[1]);
        const std::size_t cols = gb.size();
        for (std::size_t r = 0; r < g.size() / cols; ++r) {
          const T* row = g.data() + r * cols;
          for (std::size_t c = 0; c < cols; ++c) gb[c] += row[c];
        }
      }
      break;
    }
    case Op::Mul: {
      const auto& x = in_value(0).data;
      const auto& y = in_value(1).data;
      if (needs(0)) {
        auto& ga = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (needs(1)) {
        auto& gb = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
      break;
    }
    case Op::Scale: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
      break;
    }
    case Op::AddScalar: {
      pass_through(n.inputs[0]);
      break;
    }
    case Op::Relu: {
      const auto& x = in_value(0).data;
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > T(0) ? g[i] : T(0);
      break;
    }
    case Op::Tanh: {
      const auto& y = n.value.data;
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
      break;
    }
    case Op::Exp: {
      const auto& y = n.value.data;
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      break;
    }
    case Op::Log: {
      const auto& x = in_value(0).data;
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      break;
    }
    case Op::Square: {
      const auto& x = in_value(0).data;
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += T(2) * x[i] * g[i];
      break;
    }
    case Op::Sqrt: {
      const auto& y = n.value.data;
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] > T(0) ? g[i] / (T(2) * y[i]) : T(0);
      break;
    }
    case Op::Concat: {
      const AxisSplit os = split_axis(n.value.shape, n.axis);
      std::size_t offset = 0;
      for (std::size_t part : n.extra_inputs) {
        const std::size_t block = nodes_[part].value.shape[n.axis] * os.inner;
        if (nodes_[part].needs_grad) {
          auto& gp = grad_buffer(part);
          for (std::size_t o = 0; o < os.outer; ++o) {
            const T* src = g.data() + o * os.len * os.inner + offset;
            T* dst = gp.data() + o * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += block;
      }
      break;
    }
    case Op::SliceLast: {
      const Tensor<T>& x = in_value(0);
      auto& ga = grad_buffer(n.inputs[0]);
      const std::size_t cols = x.cols();
      const std::size_t w = n.value.cols();
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < w; ++c) ga[r * cols + n.axis + c] += g[r * w + c];
      break;
    }
    case Op::MaxOverAxis: {
      const AxisSplit s = split_axis(in_value(0).shape, n.axis);
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
          const std::size_t k = o * s.inner + i;
          ga[(o * s.len + n.argmax[k]) * s.inner + i] += g[k];
        }
      break;
    }
    case Op::BroadcastPoints: {
      const Tensor<T>& x = in_value(0);
      auto& ga = grad_buffer(n.inputs[0]);
      const std::size_t b = x.shape[0];
      const std::size_t c = x.shape[1];
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t p = 0; p < n.aux; ++p)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[(i * n.aux + p) * c + j];
      break;
    }
    case Op::Sum: {
      auto& ga = grad_buffer(n.inputs[0]);
      for (T& v : ga) v += g[0];
      break;
    }
    case Op::Mean: {
      auto& ga = grad_buffer(n.inputs[0]);
      const T share = g[0] / static_cast<T>(ga.size());
      for (T& v : ga) v += share;
      break;
    }
    case Op::SumAxis:
    case Op::MeanAxis: {
      const AxisSplit s = split_axis(in_value(0).shape, n.axis);
      const T factor = n.op == Op::MeanAxis ? T(1) / static_cast<T>(s.len) : T(1);
      auto& ga = grad_buffer(n.inputs[0]);
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t p = 0; p < s.len; ++p)
          for (std::size_t i = 0; i < s.inner; ++i) ga[(o * s.len + p) * s.inner + i] += factor * g[o * s.inner + i];
      break;
    }
    case Op::GaussianSample: {
      const auto& lv = in_value(1).data;
      const auto& eps = in_value(2).data;
      if (needs(0)) {
        auto& gm = grad_buffer(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
      }
      if (needs(1)) {
        auto& gl = grad_buffer(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gl[i] += g[i] * T(0.5) * std::exp(T(0.5) * lv[i]) * eps[i];
      }
      if (needs(2)) {
        auto& ge = grad_buffer(n.inputs[2]);
        for (std::size_t i = 0; i < g.size(); ++i) ge[i] += g[i] * std::exp(T(0.5) * lv[i]);
      }
      break;
    }
  }
}

template <typename T>
std::string Graph<T>::describe(std::size_t id) const {
  const Node& n = nodes_[id];
  return (n.name.empty() ? std::string(op_name(n.op)) : n.name) + " (node " + std::to_string(id) + ", shape " +
         shape_string(n.value.shape) + ")";
}

template <typename T>
void Graph<T>::check_finite() const {
  for (std::size_t id = 0; id < nodes_.size(); ++id)
    for (T v : nodes_[id].value.data)
      if (!std::isfinite(v)) throw DomainError("non-finite value in " + describe(id));
}

template class Graph<float>;
template class Graph<double>;

}  // namespace gripcvae::ad
