#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gripcvae/ad/checkpoint.hpp"
#include "gripcvae/ad/graph.hpp"
#include "gripcvae/dataset.hpp"
#include "gripcvae/hand_model.hpp"
#include "gripcvae/pointcloud.hpp"

namespace gripcvae {

struct BetaSchedule {
  double beta_min = 1e-4;
  double beta_max = 1.0;
  double ramp_start = 50.0;
  double ramp_end = 100.0;
  double center = 75.0;
  double steepness = 0.28;

  double operator()(double epoch) const;
};

/// Layer widths list hidden and output sizes; the input width of each MLP
/// follows from the previous stage.
struct CvaeConfig {
  std::size_t joint_count = 0;
  std::size_t latent_dim = 16;
  std::vector<std::size_t> point_mlp = {64, 128, 256};
  std::vector<std::size_t> joint_mlp = {64, 128};
  /// Hidden widths of the latent encoder; its output is 2 * latent_dim.
  std::vector<std::size_t> latent_hidden = {128};
  std::vector<std::size_t> decoder_point_mlp = {64, 128};
  /// Hidden widths after the z-concat; the head output is joint_count.
  std::vector<std::size_t> decoder_head = {256, 128};
  /// How many decoder_head layers run per point before the max-pool.
  std::size_t decoder_pool_after = 1;

  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double lr = 1e-4;
  BetaSchedule beta;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static CvaeConfig from_json(const nlohmann::json& j);
};

template <typename T>
struct Dense {
  ad::Tensor<T> weight;  // [in, out]
  ad::Tensor<T> bias;    // [out]
};

template <typename T>
struct CvaeParamsT {
  std::vector<Dense<T>> enc_point;
  std::vector<Dense<T>> enc_joint;
  std::vector<Dense<T>> enc_latent;
  std::vector<Dense<T>> dec_point;
  std::vector<Dense<T>> dec_head;

  /// Every tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, ad::Tensor<T>*>> named();
  std::vector<std::pair<std::string, const ad::Tensor<T>*>> named() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);
};

using CvaeParams = CvaeParamsT<float>;

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
CvaeParams init_params(const CvaeConfig& config, std::uint64_t seed);

template <typename To, typename From>
CvaeParamsT<To> cast_params(const CvaeParamsT<From>& p);

template <typename T>
struct BoundParams {
  std::vector<std::pair<ad::Var, ad::Var>> enc_point, enc_joint, enc_latent, dec_point, dec_head;
};

/// Trainable binding: backward() accumulates into the tensors' grads.
template <typename T>
BoundParams<T> bind_params(ad::Graph<T>& g, CvaeParamsT<T>& p);
/// Read-only binding for inference.
template <typename T>
BoundParams<T> bind_constants(ad::Graph<T>& g, const CvaeParamsT<T>& p);

/// points: [B, P, 3] in scaled units; q: [B, N]. Returns (mu, logvar), each [B, L].
template <typename T>
std::pair<ad::Var, ad::Var> encode(ad::Graph<T>& g, const BoundParams<T>& p, const CvaeConfig& c,
                                   ad::Var points, ad::Var q);

/// points: [B, P, 3]; z: [B, L]. Returns normalized joint predictions [B, N] in [0, 1].
template <typename T>
ad::Var decode(ad::Graph<T>& g, const BoundParams<T>& p, const CvaeConfig& c, ad::Var points, ad::Var z);

struct LossVars {
  ad::Var total;
  ad::Var recon;
  ad::Var kl;
  ad::Var mu;
  ad::Var logvar;
  ad::Var prediction;
};

/// noise: [B, L] standard normal.
template <typename T>
LossVars cvae_loss(ad::Graph<T>& g, const BoundParams<T>& p, const CvaeConfig& c, ad::Var points, ad::Var q,
                   ad::Var noise, T beta);

/// Per-sample RMSE averaged over the batch.
template <typename T>
ad::Var recon_loss(ad::Graph<T>& g, ad::Var prediction, ad::Var target);
/// 0.5 * sum(mu^2 + exp(logvar) - logvar - 1) per sample, averaged over the batch.
template <typename T>
ad::Var kl_loss(ad::Graph<T>& g, ad::Var mu, ad::Var logvar);

/// Largest distance from the hand root to any link surface point, over all
/// joint-limit corners of each link's ancestor joints.
double hand_scale(const HandModel& model);

/// Stacks clouds into [B, P, 3], dividing by `scale`. All clouds must have
/// the same size.
ad::Tensor<float> stack_points(std::span<const PointCloud* const> clouds, double scale);
ad::Tensor<float> stack_configs(std::span<const JointConfig* const> configs);

/// Trained network plus what is needed to interpret its inputs.
struct CvaeModel {
  CvaeConfig config;
  CvaeParams params;
  std::string hand_name;
  Variant variant = Variant::FullyDense;
  double point_scale = 1.0;
  std::uint64_t optimizer_step = 0;
  std::size_t epoch = 0;
};

ad::Checkpoint to_checkpoint(const CvaeModel& model);
CvaeModel from_checkpoint(const ad::Checkpoint& ckpt);

/// Latent draw k of an inference call: zero for k = 0, otherwise standard
/// normal from stream mix(seed, k).
std::vector<float> latent_sample(std::size_t latent_dim, std::uint64_t seed, std::size_t k);

/// Decodes `num_samples` latent draws per cloud. Result is [cloud][sample].
std::vector<std::vector<JointConfig>> infer_batch(const CvaeModel& model,
                                                  std::span<const PointCloud* const> clouds,
                                                  std::size_t num_samples,
                                                  std::span<const std::uint64_t> seeds);
std::vector<JointConfig> infer(const CvaeModel& model, const PointCloud& cloud, std::size_t num_samples,
                               std::uint64_t seed);

/// Encoder statistics for one (cloud, q) pair; mostly for tests and tooling.
std::pair<std::vector<float>, std::vector<float>> encode_one(const CvaeModel& model, const PointCloud& cloud,
                                                             const JointConfig& q);

struct EpochLog {
  std::size_t epoch = 0;
  double beta = 0.0;
  double train_recon = 0.0;
  double train_kl = 0.0;
  double test_recon = 0.0;
  double wall_ms = 0.0;
};

inline constexpr const char* kTrainLogHeader = "epoch,beta,train_recon,train_kl,test_recon,wall_ms";
std::string format_log_row(const EpochLog& row);

struct TrainOptions {
  /// Optional CSV sink; the header is written before the first epoch.
  std::ostream* log = nullptr;
  std::function<void(const EpochLog&)> on_epoch;
  /// Checkpoints written whenever test recon improves and at the end. Empty disables.
  std::string best_checkpoint_path;
  std::string final_checkpoint_path;
};

struct TrainResult {
  CvaeModel final_model;
  CvaeModel best_model;
  std::vector<EpochLog> log;
};

/// Noise-free reconstruction error (z = mu) averaged over the dataset.
double evaluate_recon(const CvaeModel& model, const Dataset& data);

TrainResult train(const HandModel& hand, const Dataset& train_set, const Dataset& test_set,
                  const CvaeConfig& config, const TrainOptions& options = {});

}  // namespace gripcvae
