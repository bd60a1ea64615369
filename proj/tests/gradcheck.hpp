#pragma once

// Finite-difference checks shared by the autodiff unit tests and the
// acceptance binary. Everything runs in double precision.

#include <functional>
#include <string>
#include <vector>

#include <gripcvae/ad/graph.hpp>
#include <gripcvae/cvae.hpp>
#include <gripcvae/random.hpp>

#include "oracles.hpp"

namespace gradcheck {

using gripcvae::Rng;
using gripcvae::ad::Graph;
using gripcvae::ad::Shape;
using gripcvae::ad::Tensor;
using gripcvae::ad::Var;

enum class Domain { Any, Positive, AwayFromZero };

struct OpCase {
  std::string name;
  std::vector<Shape> inputs;
  std::function<Var(Graph<double>&, const std::vector<Var>&)> build;
  Domain domain = Domain::Any;
};

inline double draw(Rng& rng, Domain d) {
  switch (d) {
    case Domain::Positive:
      return rng.uniform(0.2, 2.0);
    case Domain::AwayFromZero: {
      const double mag = rng.uniform(0.1, 1.5);
      return rng.uniform() < 0.5 ? -mag : mag;
    }
    case Domain::Any:
      break;
  }
  return rng.uniform(-1.5, 1.5);
}

/// Builds sum(op(inputs) * W) for a fixed random W, so every output entry
/// gets its own weight in the loss.
inline double weighted_loss(const OpCase& c, std::vector<Tensor<double>>& inputs, const Tensor<double>* weights,
                            bool run_backward, Tensor<double>* weights_out = nullptr, Rng* rng = nullptr) {
  Graph<double> g;
  std::vector<Var> vars;
  for (auto& t : inputs) vars.push_back(g.parameter(t));
  const Var out = c.build(g, vars);
  Tensor<double> w;
  if (weights != nullptr) {
    w = *weights;
  } else {
    w = Tensor<double>(g.shape(out));
    for (auto& v : w.data) v = rng->uniform(-1.0, 1.0);
    if (weights_out != nullptr) *weights_out = w;
  }
  const Var loss = g.sum(g.mul(out, g.constant(w)));
  if (run_backward) g.backward(loss);
  return g.value(loss).data[0];
}

/// Largest relative error between analytic and central-difference gradients
/// over all inputs of one random instance.
inline double op_gradient_error(const OpCase& c, Rng& rng) {
  std::vector<Tensor<double>> inputs;
  for (const auto& s : c.inputs) {
    Tensor<double> t(s);
    for (auto& v : t.data) v = draw(rng, c.domain);
    t.requires_grad = true;
    inputs.push_back(std::move(t));
  }
  Tensor<double> w;
  weighted_loss(c, inputs, nullptr, true, &w, &rng);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::vector<double> analytic = inputs[k].grad;
    auto f = [&](const std::vector<double>& x) {
      std::vector<Tensor<double>> copy = inputs;
      copy[k].data = x;
      for (auto& t : copy) t.requires_grad = false;
      return weighted_loss(c, copy, &w, false);
    };
    const auto numeric = oracle::numeric_gradient(f, inputs[k].data);
    worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
  }
  return worst;
}

inline std::vector<OpCase> op_cases() {
  using V = const std::vector<Var>&;
  using G = Graph<double>&;
  std::vector<OpCase> cases;
  cases.push_back({"matmul", {{3, 4}, {4, 2}}, [](G g, V v) { return g.matmul(v[0], v[1]); }});
  cases.push_back({"matmul_batched", {{2, 3, 4}, {4, 5}}, [](G g, V v) { return g.matmul(v[0], v[1]); }});
  cases.push_back({"add", {{3, 4}, {3, 4}}, [](G g, V v) { return g.add(v[0], v[1]); }});
  cases.push_back({"add_bias", {{2, 3, 4}, {4}}, [](G g, V v) { return g.add(v[0], v[1]); }});
  cases.push_back({"sub", {{5}, {5}}, [](G g, V v) { return g.sub(v[0], v[1]); }});
  cases.push_back({"mul", {{2, 3}, {2, 3}}, [](G g, V v) { return g.mul(v[0], v[1]); }});
  cases.push_back({"scale", {{2, 3}}, [](G g, V v) { return g.scale(v[0], -1.7); }});
  cases.push_back({"add_scalar", {{2, 3}}, [](G g, V v) { return g.add_scalar(v[0], 0.3); }});
  cases.push_back({"relu", {{4, 5}}, [](G g, V v) { return g.relu(v[0]); }, Domain::AwayFromZero});
  cases.push_back({"tanh", {{4, 5}}, [](G g, V v) { return g.tanh(v[0]); }});
  cases.push_back({"exp", {{4, 5}}, [](G g, V v) { return g.exp(v[0]); }});
  cases.push_back({"log", {{4, 5}}, [](G g, V v) { return g.log(v[0]); }, Domain::Positive});
  cases.push_back({"square", {{4, 5}}, [](G g, V v) { return g.square(v[0]); }});
  cases.push_back({"sqrt", {{4, 5}}, [](G g, V v) { return g.sqrt(v[0]); }, Domain::Positive});
  cases.push_back({"concat_last", {{2, 3, 2}, {2, 3, 4}}, [](G g, V v) { return g.concat(v, 2); }});
  cases.push_back({"concat_mid", {{2, 1, 3}, {2, 4, 3}}, [](G g, V v) { return g.concat(v, 1); }});
  cases.push_back({"concat_first", {{1, 3}, {2, 3}}, [](G g, V v) { return g.concat(v, 0); }});
  cases.push_back({"slice_last", {{3, 6}}, [](G g, V v) { return g.slice_last(v[0], 1, 4); }});
  cases.push_back({"max_over_points", {{2, 7, 3}}, [](G g, V v) { return g.max_over_points(v[0], 1); }});
  cases.push_back({"broadcast_points", {{2, 3}}, [](G g, V v) { return g.broadcast_points(v[0], 4); }});
  cases.push_back({"mean", {{3, 4}}, [](G g, V v) { return g.mean(v[0]); }});
  cases.push_back({"mean_axis", {{3, 4, 2}}, [](G g, V v) { return g.mean(v[0], 1); }});
  cases.push_back({"sum", {{3, 4}}, [](G g, V v) { return g.sum(v[0]); }});
  cases.push_back({"sum_axis", {{3, 4}}, [](G g, V v) { return g.sum(v[0], 1); }});
  cases.push_back({"gaussian_sample", {{3, 2}, {3, 2}, {3, 2}},
                   [](G g, V v) { return g.gaussian_sample(v[0], v[1], v[2]); }});
  cases.push_back({"mlp", {{5, 3}, {3, 6}, {6}, {6, 2}},
                   [](G g, V v) {
                     const Var h = g.tanh(g.add(g.matmul(v[0], v[1]), v[2]));
                     return g.sqrt(g.add_scalar(g.square(g.matmul(h, v[3])), 0.5));
                   }});
  return cases;
}

inline gripcvae::CvaeConfig tiny_config() {
  gripcvae::CvaeConfig c;
  c.joint_count = 4;
  c.latent_dim = 2;
  c.point_mlp = {8, 8};
  c.joint_mlp = {8};
  c.latent_hidden = {8};
  c.decoder_point_mlp = {8};
  c.decoder_head = {8, 8};
  c.decoder_pool_after = 1;
  return c;
}

/// Relative error of d(total loss)/d(every parameter) for a tiny CVAE with
/// random weights, 16 random points and a batch of two.
inline double tiny_cvae_gradient_error(std::uint64_t seed) {
  using gripcvae::CvaeParamsT;
  const gripcvae::CvaeConfig config = tiny_config();
  CvaeParamsT<double> params = gripcvae::cast_params<double, float>(gripcvae::init_params(config, seed));
  Rng rng(gripcvae::mix_seed(seed, 99));
  const std::size_t B = 2, P = 16;
  Tensor<double> points({B, P, 3}), q({B, 4}), noise({B, 2});
  for (auto& v : points.data) v = rng.uniform(-1.0, 1.0);
  for (auto& v : q.data) v = rng.uniform(0.05, 0.95);
  for (auto& v : noise.data) v = rng.normal();

  auto loss_value = [&](CvaeParamsT<double>& p, bool backward) {
    Graph<double> g;
    const auto bound = gripcvae::bind_params(g, p);
    const auto lv = gripcvae::cvae_loss(g, bound, config, g.constant(points), g.constant(q), g.constant(noise), 0.7);
    if (backward) g.backward(lv.total);
    return g.value(lv.total).data[0];
  };

  params.set_requires_grad(true);
  for (auto& [name, t] : params.named()) t->zero_grad();
  loss_value(params, true);

  double worst = 0.0;
  auto named = params.named();
  for (std::size_t k = 0; k < named.size(); ++k) {
    const std::vector<double> analytic = named[k].second->grad;
    auto f = [&](const std::vector<double>& x) {
      CvaeParamsT<double> copy = params;
      copy.set_requires_grad(false);
      copy.named()[k].second->data = x;
      return loss_value(copy, false);
    };
    const auto numeric = oracle::numeric_gradient(f, named[k].second->data);
    worst = std::max(worst, oracle::max_relative_error(analytic, numeric));
  }
  return worst;
}

}  // namespace gradcheck
