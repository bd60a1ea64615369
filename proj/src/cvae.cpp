#include "gripcvae/cvae.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <malloc.h>
#include <numeric>
#include <ostream>

#include "gripcvae/ad/adam.hpp"
#include "gripcvae/errors.hpp"
#include "gripcvae/random.hpp"

namespace gripcvae {

using ad::Graph;
using ad::Shape;
using ad::Tensor;
using ad::Var;

double BetaSchedule::operator()(double epoch) const {
  if (epoch < ramp_start) return beta_min;
  if (epoch >= ramp_end) return beta_max;
  const auto logistic = [&](double e) { return 1.0 / (1.0 + std::exp(-steepness * (e - center))); };
  // Rescaled so the ramp starts at beta_min and ends at beta_max exactly.
  const double lo = logistic(ramp_start);
  const double hi = logistic(ramp_end);
  const double s = (logistic(epoch) - lo) / (hi - lo);
  return beta_min + (beta_max - beta_min) * std::clamp(s, 0.0, 1.0);
}

// ---------------------------------------------------------------- config

void CvaeConfig::validate() const {
  auto positive = [](const std::vector<std::size_t>& dims, const char* what) {
    if (dims.empty()) throw ValidationError(std::string(what) + " needs at least one layer");
    for (std::size_t d : dims)
      if (d == 0) throw ValidationError(std::string(what) + " has a zero-width layer");
  };
  if (joint_count == 0) throw ValidationError("the model needs at least one joint");
  if (latent_dim == 0) throw ValidationError("latent_dim must be positive");
  positive(point_mlp, "point_mlp");
  positive(joint_mlp, "joint_mlp");
  positive(decoder_point_mlp, "decoder_point_mlp");
  for (std::size_t d : latent_hidden)
    if (d == 0) throw ValidationError("latent_hidden has a zero-width layer");
  for (std::size_t d : decoder_head)
    if (d == 0) throw ValidationError("decoder_head has a zero-width layer");
  if (decoder_pool_after > decoder_head.size())
    throw ValidationError("decoder_pool_after exceeds the number of hidden head layers");
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (!(lr > 0.0)) throw ValidationError("lr must be positive");
  if (!(beta.beta_min >= 0.0) || !(beta.beta_max >= beta.beta_min))
    throw ValidationError("beta schedule needs 0 <= beta_min <= beta_max");
  if (!(beta.ramp_end >= beta.ramp_start)) throw ValidationError("beta ramp end precedes its start");
}

nlohmann::json CvaeConfig::to_json() const {
  return {
      {"joint_count", joint_count},
      {"latent_dim", latent_dim},
      {"point_mlp", point_mlp},
      {"joint_mlp", joint_mlp},
      {"latent_hidden", latent_hidden},
      {"decoder_point_mlp", decoder_point_mlp},
      {"decoder_head", decoder_head},
      {"decoder_pool_after", decoder_pool_after},
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"lr", lr},
      {"beta",
       {{"min", beta.beta_min},
        {"max", beta.beta_max},
        {"ramp_start", beta.ramp_start},
        {"ramp_end", beta.ramp_end},
        {"center", beta.center},
        {"steepness", beta.steepness}}},
      {"seed", seed},
  };
}

CvaeConfig CvaeConfig::from_json(const nlohmann::json& j) {
  CvaeConfig c;
  try {
    c.joint_count = j.at("joint_count").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.point_mlp = j.at("point_mlp").get<std::vector<std::size_t>>();
    c.joint_mlp = j.at("joint_mlp").get<std::vector<std::size_t>>();
    c.latent_hidden = j.at("latent_hidden").get<std::vector<std::size_t>>();
    c.decoder_point_mlp = j.at("decoder_point_mlp").get<std::vector<std::size_t>>();
    c.decoder_head = j.at("decoder_head").get<std::vector<std::size_t>>();
    c.decoder_pool_after = j.at("decoder_pool_after").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    const auto& b = j.at("beta");
    c.beta.beta_min = b.at("min").get<double>();
    c.beta.beta_max = b.at("max").get<double>();
    c.beta.ramp_start = b.at("ramp_start").get<double>();
    c.beta.ramp_end = b.at("ramp_end").get<double>();
    c.beta.center = b.at("center").get<double>();
    c.beta.steepness = b.at("steepness").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- params

namespace {

template <typename T>
void append_named(std::vector<std::pair<std::string, Tensor<T>*>>& out, std::vector<Dense<T>>& layers,
                  const std::string& prefix) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out.emplace_back(prefix + "." + std::to_string(i) + ".weight", &layers[i].weight);
    out.emplace_back(prefix + "." + std::to_string(i) + ".bias", &layers[i].bias);
  }
}

template <typename T>
std::vector<std::vector<Dense<T>>*> groups(CvaeParamsT<T>& p) {
  return {&p.enc_point, &p.enc_joint, &p.enc_latent, &p.dec_point, &p.dec_head};
}

constexpr const char* kGroupNames[] = {"enc_point", "enc_joint", "enc_latent", "dec_point", "dec_head"};

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& widths, std::size_t out = 0) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), widths.begin(), widths.end());
  if (out) dims.push_back(out);
  return dims;
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> CvaeParamsT<T>::named() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  auto gs = groups(*this);
  for (std::size_t k = 0; k < gs.size(); ++k) append_named(out, *gs[k], kGroupNames[k]);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> CvaeParamsT<T>::named() const {
  std::vector<std::pair<std::string, const Tensor<T>*>> out;
  for (auto& [n, t] : const_cast<CvaeParamsT<T>*>(this)->named()) out.emplace_back(n, t);
  return out;
}

template <typename T>
std::size_t CvaeParamsT<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& entry : named()) n += entry.second->size();
  return n;
}

template <typename T>
void CvaeParamsT<T>::set_requires_grad(bool on) {
  for (auto& entry : named()) entry.second->requires_grad = on;
}

template struct CvaeParamsT<float>;
template struct CvaeParamsT<double>;

CvaeParams init_params(const CvaeConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t L = config.latent_dim;
  const std::size_t N = config.joint_count;
  const std::vector<std::vector<std::size_t>> dims = {
      chain(3, config.point_mlp),
      chain(N, config.joint_mlp),
      chain(config.point_mlp.back() + config.joint_mlp.back(), config.latent_hidden, 2 * L),
      chain(3, config.decoder_point_mlp),
      chain(config.decoder_point_mlp.back() + L, config.decoder_head, N),
  };
  CvaeParams p;
  auto gs = groups(p);
  std::uint64_t stream = 0;
  for (std::size_t k = 0; k < gs.size(); ++k) {
    for (std::size_t i = 0; i + 1 < dims[k].size(); ++i) {
      const std::size_t in = dims[k][i];
      const std::size_t out = dims[k][i + 1];
      Rng rng(mix_seed(seed, stream++));
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      Dense<float> layer{Tensor<float>(Shape{in, out}), Tensor<float>(Shape{out})};
      for (float& w : layer.weight.data) w = static_cast<float>(rng.uniform(-bound, bound));
      for (float& b : layer.bias.data) b = static_cast<float>(rng.uniform(-bound, bound));
      gs[k]->push_back(std::move(layer));
    }
  }
  return p;
}

template <typename To, typename From>
CvaeParamsT<To> cast_params(const CvaeParamsT<From>& p) {
  auto cast_group = [](const std::vector<Dense<From>>& src) {
    std::vector<Dense<To>> dst;
    for (const auto& layer : src) {
      Dense<To> d{Tensor<To>(layer.weight.shape), Tensor<To>(layer.bias.shape)};
      std::transform(layer.weight.data.begin(), layer.weight.data.end(), d.weight.data.begin(),
                     [](From v) { return static_cast<To>(v); });
      std::transform(layer.bias.data.begin(), layer.bias.data.end(), d.bias.data.begin(),
                     [](From v) { return static_cast<To>(v); });
      d.weight.requires_grad = layer.weight.requires_grad;
      d.bias.requires_grad = layer.bias.requires_grad;
      dst.push_back(std::move(d));
    }
    return dst;
  };
  CvaeParamsT<To> out;
  out.enc_point = cast_group(p.enc_point);
  out.enc_joint = cast_group(p.enc_joint);
  out.enc_latent = cast_group(p.enc_latent);
  out.dec_point = cast_group(p.dec_point);
  out.dec_head = cast_group(p.dec_head);
  return out;
}

template CvaeParamsT<double> cast_params<double, float>(const CvaeParamsT<float>&);
template CvaeParamsT<float> cast_params<float, double>(const CvaeParamsT<double>&);

// ---------------------------------------------------------------- network

template <typename T>
BoundParams<T> bind_params(Graph<T>& g, CvaeParamsT<T>& p) {
  auto bind_group = [&](std::vector<Dense<T>>& layers) {
    std::vector<std::pair<Var, Var>> out;
    for (auto& l : layers) out.emplace_back(g.parameter(l.weight), g.parameter(l.bias));
    return out;
  };
  return {bind_group(p.enc_point), bind_group(p.enc_joint), bind_group(p.enc_latent), bind_group(p.dec_point),
          bind_group(p.dec_head)};
}

template <typename T>
BoundParams<T> bind_constants(Graph<T>& g, const CvaeParamsT<T>& p) {
  auto bind_group = [&](const std::vector<Dense<T>>& layers) {
    std::vector<std::pair<Var, Var>> out;
    for (const auto& l : layers) out.emplace_back(g.constant(l.weight), g.constant(l.bias));
    return out;
  };
  return {bind_group(p.enc_point), bind_group(p.enc_joint), bind_group(p.enc_latent), bind_group(p.dec_point),
          bind_group(p.dec_head)};
}

namespace {

template <typename T>
Var dense(Graph<T>& g, const std::pair<Var, Var>& layer, Var x) {
  return g.add(g.matmul(x, layer.first), layer.second);
}

template <typename T>
Var mlp(Graph<T>& g, const std::vector<std::pair<Var, Var>>& layers, std::size_t begin, std::size_t end, Var x,
        bool relu_last) {
  for (std::size_t i = begin; i < end; ++i) {
    x = dense(g, layers[i], x);
    if (i + 1 < end || relu_last) x = g.relu(x);
  }
  return x;
}

}  // namespace

template <typename T>
std::pair<Var, Var> encode(Graph<T>& g, const BoundParams<T>& p, const CvaeConfig& c, Var points, Var q) {
  const Shape& ps = g.shape(points);
  if (ps.size() != 3 || ps[2] != 3) throw DimensionError("encode: points must be [B, P, 3], got " + ad::shape_string(ps));
  if (ps[1] == 0) throw DimensionError("encode: empty point cloud");
  const Shape& qs = g.shape(q);
  if (qs.size() != 2 || qs[0] != ps[0] || qs[1] != c.joint_count)
    throw DimensionError("encode: q must be [" + std::to_string(ps[0]) + ", " + std::to_string(c.joint_count) +
                         "], got " + ad::shape_string(qs));
  Var f = mlp(g, p.enc_point, 0, p.enc_point.size(), points, true);
  f = g.max_over_points(f, 1);
  Var j = mlp(g, p.enc_joint, 0, p.enc_joint.size(), q, true);
  const Var parts[] = {f, j};
  Var h = g.concat(parts, 1);
  h = mlp(g, p.enc_latent, 0, p.enc_latent.size(), h, false);
  Var mu = g.slice_last(h, 0, c.latent_dim);
  Var logvar = g.slice_last(h, c.latent_dim, 2 * c.latent_dim);
  g.set_name(mu, "mu");
  g.set_name(logvar, "logvar");
  return {mu, logvar};
}

template <typename T>
Var decode(Graph<T>& g, const BoundParams<T>& p, const CvaeConfig& c, Var points, Var z) {
  const Shape& ps = g.shape(points);
  if (ps.size() != 3 || ps[2] != 3) throw DimensionError("decode: points must be [B, P, 3], got " + ad::shape_string(ps));
  if (ps[1] == 0) throw DimensionError("decode: empty point cloud");
  const Shape& zs = g.shape(z);
  if (zs.size() != 2 || zs[0] != ps[0] || zs[1] != c.latent_dim)
    throw DimensionError("decode: z must be [" + std::to_string(ps[0]) + ", " + std::to_string(c.latent_dim) +
                         "], got " + ad::shape_string(zs));
  Var h = mlp(g, p.dec_point, 0, p.dec_point.size(), points, true);
  const Var parts[] = {h, g.broadcast_points(z, ps[1])};
  h = g.concat(parts, 2);
  const std::size_t pool = c.decoder_pool_after;
  h = mlp(g, p.dec_head, 0, pool, h, true);
  h = g.max_over_points(h, 1);
  h = mlp(g, p.dec_head, pool, p.dec_head.size(), h, false);
  // 0.5 * tanh(x / 2) + 0.5 is the logistic function.
  Var out = g.add_scalar(g.scale(g.tanh(g.scale(h, T(0.5))), T(0.5)), T(0.5));
  g.set_name(out, "prediction");
  return out;
}

template <typename T>
Var recon_loss(Graph<T>& g, Var prediction, Var target) {
  Var per_sample = g.sqrt(g.mean(g.square(g.sub(prediction, target)), 1));
  Var r = g.mean(per_sample);
  g.set_name(r, "recon");
  return r;
}

template <typename T>
Var kl_loss(Graph<T>& g, Var mu, Var logvar) {
  Var terms = g.add_scalar(g.sub(g.add(g.square(mu), g.exp(logvar)), logvar), T(-1));
  Var k = g.scale(g.mean(g.sum(terms, 1)), T(0.5));
  g.set_name(k, "kl");
  return k;
}

template <typename T>
LossVars cvae_loss(Graph<T>& g, const BoundParams<T>& p, const CvaeConfig& c, Var points, Var q, Var noise,
                   T beta) {
  if (beta < T(0)) throw ValidationError("beta must be non-negative");
  auto [mu, logvar] = encode(g, p, c, points, q);
  Var z = g.gaussian_sample(mu, logvar, noise);
  Var pred = decode(g, p, c, points, z);
  Var recon = recon_loss(g, pred, q);
  Var kl = kl_loss(g, mu, logvar);
  Var total = g.add(recon, g.scale(kl, beta));
  g.set_name(total, "total");
  return {total, recon, kl, mu, logvar, pred};
}

#define GRIPCVAE_INSTANTIATE(T)                                                                                  \
  template BoundParams<T> bind_params<T>(Graph<T>&, CvaeParamsT<T>&);                                           \
  template BoundParams<T> bind_constants<T>(Graph<T>&, const CvaeParamsT<T>&);                                  \
  template std::pair<Var, Var> encode<T>(Graph<T>&, const BoundParams<T>&, const CvaeConfig&, Var, Var);       \
  template Var decode<T>(Graph<T>&, const BoundParams<T>&, const CvaeConfig&, Var, Var);                       \
  template Var recon_loss<T>(Graph<T>&, Var, Var);                                                              \
  template Var kl_loss<T>(Graph<T>&, Var, Var);                                                                 \
  template LossVars cvae_loss<T>(Graph<T>&, const BoundParams<T>&, const CvaeConfig&, Var, Var, Var, T);

GRIPCVAE_INSTANTIATE(float)
GRIPCVAE_INSTANTIATE(double)
#undef GRIPCVAE_INSTANTIATE

// ---------------------------------------------------------------- inputs

double hand_scale(const HandModel& model) {
  std::vector<double> base(model.joint_count());
  for (std::size_t j = 0; j < base.size(); ++j)
    base[j] = std::clamp(0.0, model.joints[j].limit_lo, model.joints[j].limit_hi);
  double scale = 0.0;
  for (std::size_t l = 0; l < model.link_count(); ++l) {
    const auto ancestors = model.ancestor_joints(l);
    const double reach = bounding_radius(model.links[l].geometry);
    auto visit = [&](const std::vector<double>& q) {
      const auto frames = forward_kinematics_radians(model, q);
      scale = std::max(scale, frames[l].apply(model.links[l].keypoint).norm() + reach);
    };
    if (ancestors.size() <= 16) {
      for (std::uint32_t mask = 0; mask < (1u << ancestors.size()); ++mask) {
        std::vector<double> q = base;
        for (std::size_t a = 0; a < ancestors.size(); ++a) {
          const Joint& jt = model.joints[ancestors[a]];
          q[ancestors[a]] = (mask >> a) & 1u ? jt.limit_hi : jt.limit_lo;
        }
        visit(q);
      }
    } else {
      Rng rng(mix_seed(0x5ca1e, l));
      for (int s = 0; s < 65536; ++s) {
        std::vector<double> q = base;
        for (std::size_t a : ancestors) q[a] = rng.uniform() < 0.5 ? model.joints[a].limit_lo : model.joints[a].limit_hi;
        visit(q);
      }
    }
  }
  if (!(scale > 0.0)) throw ValidationError("hand has zero extent");
  return scale;
}

Tensor<float> stack_points(std::span<const PointCloud* const> clouds, double scale) {
  if (clouds.empty()) throw DimensionError("no clouds to stack");
  const std::size_t P = clouds[0]->size();
  Tensor<float> t(Shape{clouds.size(), P, 3});
  for (std::size_t b = 0; b < clouds.size(); ++b) {
    if (clouds[b]->size() != P)
      throw DimensionError("clouds in one batch differ in size: " + std::to_string(P) + " vs " +
                           std::to_string(clouds[b]->size()));
    float* dst = t.data.data() + b * P * 3;
    for (std::size_t i = 0; i < P; ++i)
      for (int k = 0; k < 3; ++k) dst[i * 3 + k] = static_cast<float>(clouds[b]->points[i][k] / scale);
  }
  return t;
}

Tensor<float> stack_configs(std::span<const JointConfig* const> configs) {
  if (configs.empty()) throw DimensionError("no configs to stack");
  const std::size_t N = configs[0]->size();
  Tensor<float> t(Shape{configs.size(), N});
  for (std::size_t b = 0; b < configs.size(); ++b) {
    if (configs[b]->size() != N) throw DimensionError("configs in one batch differ in size");
    for (std::size_t j = 0; j < N; ++j) t.data[b * N + j] = static_cast<float>((*configs[b])[j]);
  }
  return t;
}

// ---------------------------------------------------------------- checkpoints

ad::Checkpoint to_checkpoint(const CvaeModel& model) {
  ad::Checkpoint ckpt;
  ckpt.meta = {
      {"kind", "gripcvae-cvae"},
      {"hand_name", model.hand_name},
      {"variant", variant_name(model.variant)},
      {"joint_count", model.config.joint_count},
      {"point_scale", model.point_scale},
      {"epoch", model.epoch},
      {"config", model.config.to_json()},
      {"optimizer",
       {{"name", "adam"}, {"step", model.optimizer_step}, {"lr", model.config.lr}, {"beta1", 0.9},
        {"beta2", 0.999}, {"eps", 1e-8}}},
  };
  for (const auto& [name, t] : model.params.named()) {
    Tensor<float> copy(t->shape, t->data);
    ckpt.tensors.emplace_back(name, std::move(copy));
  }
  return ckpt;
}

CvaeModel from_checkpoint(const ad::Checkpoint& ckpt) {
  CvaeModel m;
  try {
    if (ckpt.meta.value("kind", "") != "gripcvae-cvae") throw ValidationError("checkpoint does not hold a CVAE");
    m.config = CvaeConfig::from_json(ckpt.meta.at("config"));
    m.hand_name = ckpt.meta.at("hand_name").get<std::string>();
    m.variant = parse_variant(ckpt.meta.at("variant").get<std::string>());
    m.point_scale = ckpt.meta.at("point_scale").get<double>();
    m.epoch = ckpt.meta.at("epoch").get<std::size_t>();
    m.optimizer_step = ckpt.meta.at("optimizer").at("step").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad checkpoint metadata: ") + e.what());
  }
  m.params = init_params(m.config, 0);
  for (auto& [name, t] : m.params.named()) {
    const Tensor<float>& src = ckpt.at(name);
    if (src.shape != t->shape)
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + ad::shape_string(src.shape) +
                           ", config expects " + ad::shape_string(t->shape));
    t->data = src.data;
  }
  if (ckpt.tensors.size() != m.params.named().size())
    throw ValidationError("checkpoint holds unexpected extra tensors");
  return m;
}

// ---------------------------------------------------------------- inference

std::vector<float> latent_sample(std::size_t latent_dim, std::uint64_t seed, std::size_t k) {
  std::vector<float> z(latent_dim, 0.0f);
  if (k == 0) return z;
  Rng rng(mix_seed(seed, k));
  for (float& v : z) v = static_cast<float>(rng.normal());
  return z;
}

std::vector<std::vector<JointConfig>> infer_batch(const CvaeModel& model, std::span<const PointCloud* const> clouds,
                                                  std::size_t num_samples, std::span<const std::uint64_t> seeds) {
  if (seeds.size() != clouds.size()) throw DimensionError("infer_batch: one seed per cloud required");
  std::vector<std::vector<JointConfig>> result(clouds.size());
  if (clouds.empty() || num_samples == 0) return result;
  for (const PointCloud* c : clouds)
    if (c->size() != clouds[0]->size()) {
      for (std::size_t i = 0; i < clouds.size(); ++i) result[i] = infer(model, *clouds[i], num_samples, seeds[i]);
      return result;
    }

  const CvaeConfig& c = model.config;
  const std::size_t B = clouds.size();
  const std::size_t rows = B * num_samples;
  const Tensor<float> base = stack_points(clouds, model.point_scale);
  const std::size_t stride = base.size() / B;
  Tensor<float> pts(Shape{rows, base.shape[1], 3});
  Tensor<float> z(Shape{rows, c.latent_dim});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < num_samples; ++k) {
      const std::size_t r = b * num_samples + k;
      std::copy_n(base.data.begin() + static_cast<std::ptrdiff_t>(b * stride), stride,
                  pts.data.begin() + static_cast<std::ptrdiff_t>(r * stride));
      const auto zk = latent_sample(c.latent_dim, seeds[b], k);
      std::copy(zk.begin(), zk.end(), z.data.begin() + static_cast<std::ptrdiff_t>(r * c.latent_dim));
    }

  Graph<float> g;
  g.set_row_stable(true);
  const auto bound = bind_constants(g, model.params);
  const Var out = decode(g, bound, c, g.constant(std::move(pts)), g.constant(std::move(z)));
  const auto& v = g.value(out).data;
  for (std::size_t b = 0; b < B; ++b) {
    result[b].reserve(num_samples);
    for (std::size_t k = 0; k < num_samples; ++k) {
      const std::size_t r = b * num_samples + k;
      std::vector<double> q(c.joint_count);
      for (std::size_t j = 0; j < q.size(); ++j) q[j] = std::clamp(static_cast<double>(v[r * c.joint_count + j]), 0.0, 1.0);
      result[b].emplace_back(std::move(q));
    }
  }
  return result;
}

std::vector<JointConfig> infer(const CvaeModel& model, const PointCloud& cloud, std::size_t num_samples,
                               std::uint64_t seed) {
  const PointCloud* ptr = &cloud;
  return std::move(infer_batch(model, std::span(&ptr, 1), num_samples, std::span(&seed, 1))[0]);
}

std::pair<std::vector<float>, std::vector<float>> encode_one(const CvaeModel& model, const PointCloud& cloud,
                                                             const JointConfig& q) {
  const PointCloud* cp = &cloud;
  const JointConfig* qp = &q;
  Graph<float> g;
  g.set_row_stable(true);
  const auto bound = bind_constants(g, model.params);
  auto [mu, logvar] = encode(g, bound, model.config, g.constant(stack_points(std::span(&cp, 1), model.point_scale)),
                             g.constant(stack_configs(std::span(&qp, 1))));
  return {g.value(mu).data, g.value(logvar).data};
}

// ---------------------------------------------------------------- training

std::string format_log_row(const EpochLog& row) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.3f", row.epoch, row.beta, row.train_recon,
                row.train_kl, row.test_recon, row.wall_ms);
  return buf;
}

namespace {

constexpr std::size_t kEvalBatch = 256;

void check_dataset(const Dataset& d, const HandModel& hand, const CvaeConfig& config, const char* what) {
  if (d.header.hand_name != hand.name)
    throw ValidationError(std::string(what) + " set was built for hand '" + d.header.hand_name + "', not '" +
                          hand.name + "'");
  if (d.header.joint_count != config.joint_count)
    throw ValidationError(std::string(what) + " set has " + std::to_string(d.header.joint_count) +
                          " joints, model expects " + std::to_string(config.joint_count));
}

}  // namespace

double evaluate_recon(const CvaeModel& model, const Dataset& data) {
  if (data.records.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  const std::size_t N = model.config.joint_count;
  for (std::size_t start = 0; start < data.records.size(); start += kEvalBatch) {
    const std::size_t end = std::min(data.records.size(), start + kEvalBatch);
    std::vector<const PointCloud*> clouds;
    std::vector<const JointConfig*> configs;
    for (std::size_t i = start; i < end; ++i) {
      clouds.push_back(&data.records[i].cloud);
      configs.push_back(&data.records[i].config);
    }
    Graph<float> g;
    const auto bound = bind_constants(g, model.params);
    const Var pts = g.constant(stack_points(clouds, model.point_scale));
    const Var q = g.constant(stack_configs(configs));
    auto [mu, logvar] = encode(g, bound, model.config, pts, q);
    const Var pred = decode(g, bound, model.config, pts, mu);
    const auto& p = g.value(pred).data;
    const auto& t = g.value(q).data;
    for (std::size_t b = 0; b < end - start; ++b) {
      double se = 0.0;
      for (std::size_t j = 0; j < N; ++j) {
        const double d = static_cast<double>(p[b * N + j]) - static_cast<double>(t[b * N + j]);
        se += d * d;
      }
      total += std::sqrt(se / static_cast<double>(N));
    }
  }
  return total / static_cast<double>(data.records.size());
}

TrainResult train(const HandModel& hand, const Dataset& train_set, const Dataset& test_set, const CvaeConfig& config,
                  const TrainOptions& options) {
  config.validate();
  if (config.joint_count != hand.joint_count())
    throw ValidationError("config has " + std::to_string(config.joint_count) + " joints, hand has " +
                          std::to_string(hand.joint_count()));
  if (train_set.records.empty()) throw ValidationError("training set is empty");
  check_dataset(train_set, hand, config, "training");
  check_dataset(test_set, hand, config, "test");
  if (train_set.header.variant != test_set.header.variant)
    throw ValidationError("training set is " + variant_name(train_set.header.variant) + " but test set is " +
                          variant_name(test_set.header.variant));

  // Activations are large and reallocated every step; keeping them on the
  // heap instead of fresh mmap pages avoids a page-fault storm per batch.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CvaeModel model;
  model.config = config;
  model.hand_name = hand.name;
  model.variant = train_set.header.variant;
  model.point_scale = hand_scale(hand);
  model.params = init_params(config, mix_seed(config.seed, 1));
  model.params.set_requires_grad(true);

  std::vector<ad::Tensor<float>*> tensors;
  for (auto& entry : model.params.named()) tensors.push_back(entry.second);
  ad::Adam optimizer(tensors, ad::AdamOptions{config.lr});
  Rng rng(mix_seed(config.seed, 2));

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  if (options.log) *options.log << kTrainLogHeader << '\n';

  const std::size_t M = train_set.records.size();
  std::vector<std::size_t> order(M);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t L = config.latent_dim;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double beta = config.beta(static_cast<double>(epoch));
    for (std::size_t i = M; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double recon_sum = 0.0;
    double kl_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < M; start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(M, start + config.batch_size);
      const std::size_t B = end - start;
      std::vector<const PointCloud*> clouds;
      std::vector<const JointConfig*> configs;
      for (std::size_t i = start; i < end; ++i) {
        clouds.push_back(&train_set.records[order[i]].cloud);
        configs.push_back(&train_set.records[order[i]].config);
      }
      Tensor<float> noise(Shape{B, L});
      for (float& v : noise.data) v = static_cast<float>(rng.normal());

      Graph<float> g;
      const auto bound = bind_params(g, model.params);
      const LossVars lv = cvae_loss(g, bound, config, g.constant(stack_points(clouds, model.point_scale)),
                                    g.constant(stack_configs(configs)), g.constant(std::move(noise)),
                                    static_cast<float>(beta));
      const float total = g.value(lv.total).data[0];
      if (!std::isfinite(total)) {
        std::string where = "epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch_index);
        try {
          g.check_finite();
        } catch (const DomainError& e) {
          throw DomainError("non-finite loss at " + where + ": " + e.what());
        }
        throw DomainError("non-finite loss at " + where);
      }
      g.backward(lv.total);
      optimizer.step();
      recon_sum += static_cast<double>(g.value(lv.recon).data[0]) * static_cast<double>(B);
      kl_sum += static_cast<double>(g.value(lv.kl).data[0]) * static_cast<double>(B);
    }
    model.optimizer_step = optimizer.steps();
    model.epoch = epoch + 1;

    EpochLog row;
    row.epoch = epoch;
    row.beta = beta;
    row.train_recon = recon_sum / static_cast<double>(M);
    row.train_kl = kl_sum / static_cast<double>(M);
    row.test_recon = test_set.records.empty() ? row.train_recon : evaluate_recon(model, test_set);
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);
    if (options.log) *options.log << format_log_row(row) << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(row);

    if (row.test_recon < best) {
      best = row.test_recon;
      result.best_model = model;
      if (!options.best_checkpoint_path.empty())
        ad::save_checkpoint(to_checkpoint(model), options.best_checkpoint_path);
    }
  }
  if (config.epochs == 0) result.best_model = model;
  result.final_model = model;
  if (!options.final_checkpoint_path.empty()) ad::save_checkpoint(to_checkpoint(model), options.final_checkpoint_path);
  result.final_model.params.set_requires_grad(false);
  result.best_model.params.set_requires_grad(false);
  return result;
}

}  // namespace gripcvae
