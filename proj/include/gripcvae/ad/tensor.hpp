#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gripcvae::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor. The gradient buffer is allocated on first use.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;
  bool requires_grad = false;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  /// Size of the last dimension (1 for scalars).
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  /// Product of all dimensions but the last.
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() { grad.assign(data.size(), T(0)); }
};

}  // namespace gripcvae::ad
