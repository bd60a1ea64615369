#include "gripcvae/ad/adam.hpp"

#include <cmath>

namespace gripcvae::ad {

Adam::Adam(std::vector<Tensor<float>*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
  for (Tensor<float>* p : params_) {
    m_.emplace_back(p->size(), 0.0f);
    v_.emplace_back(p->size(), 0.0f);
  }
}

void Adam::step() {
  ++t_;
  const double b1 = opts_.beta1;
  const double b2 = opts_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const float lr = static_cast<float>(opts_.lr);
  const float eps = static_cast<float>(opts_.eps);
  const float fb1 = static_cast<float>(b1);
  const float fb2 = static_cast<float>(b2);
  const float inv_c1 = static_cast<float>(1.0 / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<float>& p = *params_[k];
    if (p.grad.size() != p.data.size()) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const float g = p.grad[i];
      m[i] = fb1 * m[i] + (1.0f - fb1) * g;
      v[i] = fb2 * v[i] + (1.0f - fb2) * g * g;
      const float mhat = m[i] * inv_c1;
      const float vhat = v[i] * inv_c2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (Tensor<float>* p : params_)
    if (p->requires_grad) p->zero_grad();
}

}  // namespace gripcvae::ad
