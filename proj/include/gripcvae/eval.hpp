#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gripcvae/cvae.hpp"
#include "gripcvae/dataset.hpp"
#include "gripcvae/hand_model.hpp"

namespace gripcvae {

struct Normalizers {
  /// limit_hi - limit_lo per joint, radians.
  std::vector<double> joint_range;
  /// Largest distance between two reachable positions of each keypoint, mm.
  std::vector<double> keypoint_displacement;
  /// Links whose keypoint cannot move; left out of Cartesian percentages.
  std::vector<std::size_t> immobile_links;
};

/// Per keypoint, the largest pairwise distance over every joint-limit corner
/// of its ancestor joints plus `sample_budget` uniform random configurations.
std::vector<double> max_keypoint_displacement(const HandModel& model, std::size_t sample_budget,
                                              std::uint64_t seed = 0);
Normalizers make_normalizers(const HandModel& model, std::size_t sample_budget = 1024, std::uint64_t seed = 0);

struct ErrorValue {
  double value = 0.0;
  double pct = 0.0;
};

/// Mean absolute joint error in radians; pct averages 100 * |d| / range.
/// `joints` restricts the mean to a subset (all joints when empty).
ErrorValue joint_error(const JointConfig& truth, const JointConfig& pred, const HandModel& model,
                       std::span<const std::size_t> joints = {});

/// Mean keypoint distance in mm over `links` (all links when empty). pct
/// averages 100 * d / displacement over the mobile links of the subset and
/// is 0 without normalizers.
ErrorValue cartesian_error(const JointConfig& truth, const JointConfig& pred, const HandModel& model,
                           const Normalizers* norms = nullptr, std::span<const std::size_t> links = {});

struct PredictRequest {
  std::size_t record_index = 0;
  const PointCloud* cloud = nullptr;
  std::uint64_t seed = 0;
};

/// Returns `samples` predictions per request, sample 0 first.
using Predictor = std::function<std::vector<std::vector<JointConfig>>(std::span<const PredictRequest>, std::size_t samples)>;

Predictor cvae_predictor(const CvaeModel& model);
/// Ignores its input and always predicts `q`.
Predictor constant_predictor(const JointConfig& q);
/// Componentwise mean of the dataset's configurations.
JointConfig mean_config(const Dataset& data);

struct ChainSlice {
  std::string name;
  std::vector<std::size_t> joints;
  std::vector<std::size_t> links;
};

/// One slice per finger of the full-hand model.
std::vector<ChainSlice> chain_slices(const HandModel& model);

struct RecordMetrics {
  std::size_t record = 0;
  std::uint64_t record_seed = 0;
  ErrorValue joint;
  ErrorValue cartesian;
  ErrorValue lowest_joint;
  ErrorValue lowest_cartesian;
  /// Sample-0 errors restricted to each chain slice.
  std::vector<ErrorValue> chain_joint;
  std::vector<ErrorValue> chain_cartesian;
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  double pct = 0.0;
};

struct MetricReport {
  Aggregate joint_error_rad;
  Aggregate cartesian_error_mm;
  Aggregate lowest_joint_error_rad;
  Aggregate lowest_cartesian_error_mm;
  Aggregate inference_time_ms;
  std::vector<Aggregate> chain_joint_error_rad;
  std::vector<Aggregate> chain_cartesian_error_mm;
  std::size_t samples = 1;
  std::size_t record_count = 0;
};

struct EvalOptions {
  std::size_t samples = 8;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t batch_size = 64;
  /// Batch size of the separate timing pass; 0 skips it.
  std::size_t timing_batch = 100;
  std::size_t displacement_budget = 1024;
};

struct EvalResult {
  MetricReport report;
  std::vector<RecordMetrics> records;
  std::vector<ChainSlice> chains;
  Normalizers normalizers;
  /// Sample-0 predictions, one per record.
  std::vector<JointConfig> predictions;
};

EvalResult evaluate(const HandModel& model, const Dataset& data, const Predictor& predictor,
                    const EvalOptions& options = {});

/// Checkpoint/dataset compatibility: hand name, variant and joint count.
void check_compatible(const CvaeModel& model, const Dataset& data);

/// Mean and std (over batches) of wall-clock milliseconds per sample for
/// single-sample inference in batches of `batch_size`. Runs on the calling thread.
Aggregate time_inference(const Dataset& data, const Predictor& predictor, std::size_t batch_size,
                         std::uint64_t seed = 0);

/// Mean and population std of a column, mainly for report re-aggregation.
Aggregate aggregate(std::span<const double> values);

std::string report_csv(const EvalResult& result);
/// metric,mean,std,pct rows preceded by '#' lines describing the run.
std::string summary_csv(const EvalResult& result, const std::string& preamble = {});
/// Writes per-joint histograms of true and predicted values plus a gnuplot
/// script into `dir`. Returns the written paths.
std::vector<std::string> write_gnuplot(const std::string& dir, const HandModel& model, const Dataset& data,
                                       const EvalResult& result);

/// One line naming the CPU and thread count, for report headers.
std::string hardware_description();

}  // namespace gripcvae
