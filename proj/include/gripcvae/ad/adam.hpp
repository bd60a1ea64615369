#pragma once

#include <cstdint>
#include <vector>

#include "gripcvae/ad/tensor.hpp"

namespace gripcvae::ad {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter in the order the
/// parameters were registered.
class Adam {
 public:
  Adam(std::vector<Tensor<float>*> params, AdamOptions opts = {});

  /// Applies one update from the accumulated grads, then zeroes them.
  void step();
  void zero_grad();

  std::uint64_t steps() const { return t_; }
  void set_steps(std::uint64_t t) { t_ = t; }
  const AdamOptions& options() const { return opts_; }
  void set_lr(double lr) { opts_.lr = lr; }

  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }

 private:
  std::vector<Tensor<float>*> params_;
  AdamOptions opts_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

}  // namespace gripcvae::ad
