#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gripcvae/collision.hpp"
#include "gripcvae/hand_model.hpp"
#include "gripcvae/pointcloud.hpp"

namespace gripcvae {

enum class SplitTag : std::uint8_t { All = 0, Train = 1, Test = 2 };

std::string split_name(SplitTag s);

inline constexpr std::array<char, 4> kDatasetMagic = {'G', 'C', 'V', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;

struct DatasetHeader {
  std::uint16_t version = kDatasetVersion;
  Variant variant = Variant::FullyDense;
  SplitTag split = SplitTag::All;
  std::uint32_t joint_count = 0;
  /// Points per record, 0 when records differ.
  std::uint32_t points_per_record = 0;
  std::uint64_t record_count = 0;
  std::uint64_t global_seed = 0;
  /// Candidates drawn before record_count valid ones were found.
  std::uint64_t candidates_tried = 0;
  std::string hand_name;
};

struct DatasetRecord {
  JointConfig config;
  PointCloud cloud;
  std::uint64_t record_seed = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<DatasetRecord> records;
};

/// Serializes with float32 payloads. record_count is taken from records.size().
void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);

/// Rounds every payload value through float32, i.e. what a write/read cycle yields.
Dataset quantize(const Dataset& dataset);

struct GenerateOptions {
  std::size_t count = 1;
  std::uint64_t global_seed = 0;
  /// 0 means 100 * count.
  std::size_t max_candidates = 0;
  std::size_t jobs = 1;
};

struct GenerateSummary {
  std::size_t records = 0;
  std::size_t candidates_tried = 0;
  double retention_rate = 0.0;
};

/// Candidate i draws its normalized configuration from stream mix(seed, i).
/// Values are rounded to float32 before the collision test so that the
/// stored configuration is exactly the one that was checked.
JointConfig draw_candidate(std::size_t joint_count, std::uint64_t global_seed, std::uint64_t index);

/// Rejection-samples `count` collision-free configurations, builds their
/// clouds, and streams the dataset to `out` in acceptance order.
GenerateSummary generate(const HandModel& model, const SamplingSpec& spec, const CollisionPolicy& policy,
                         const GenerateOptions& options, std::ostream& out);
GenerateSummary generate_file(const HandModel& model, const SamplingSpec& spec,
                              const CollisionPolicy& policy, const GenerateOptions& options,
                              const std::string& path);

/// Seeded disjoint split; the train part holds round(fraction * M) records.
/// Both parts keep the original record order.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

inline constexpr std::size_t kHistogramBins = 20;

struct DatasetStats {
  std::vector<double> per_joint_mean;
  std::vector<double> per_joint_std;
  double pooled_mean = 0.0;
  double pooled_std = 0.0;
  double retention_rate = 0.0;
  std::vector<std::array<std::size_t, kHistogramBins>> histogram;
};

/// Population statistics over normalized joint values.
DatasetStats stats(const Dataset& dataset);
std::string stats_csv(const DatasetStats& s, const std::vector<std::string>& joint_names);

struct IngestResult {
  Dataset dataset;
  std::size_t rows = 0;
  /// Values more than 1e-6 rad outside their limits (clamped).
  std::size_t clamped = 0;
};

/// Reads rows of N radian values (optional header row), normalizes them and
/// synthesizes clouds with the template. No collision filtering.
IngestResult ingest_external_configs(const std::string& csv_text, const HandModel& model,
                                     const CloudTemplate& tmpl);

}  // namespace gripcvae
