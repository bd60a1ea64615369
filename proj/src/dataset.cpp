#include "gripcvae/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "gripcvae/binary_io.hpp"
#include "gripcvae/errors.hpp"
#include "gripcvae/parallel.hpp"
#include "gripcvae/random.hpp"

namespace gripcvae {

namespace {

constexpr double kLimitTolerance = 1e-6;

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

void write_header(std::ostream& out, const DatasetHeader& h) {
  out.write(kDatasetMagic.data(), kDatasetMagic.size());
  bin::put_uint<std::uint16_t>(out, h.version);
  bin::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(h.variant));
  bin::put_uint<std::uint8_t>(out, static_cast<std::uint8_t>(h.split));
  bin::put_uint<std::uint32_t>(out, h.joint_count);
  bin::put_uint<std::uint32_t>(out, h.points_per_record);
  bin::put_uint<std::uint64_t>(out, h.record_count);
  bin::put_uint<std::uint64_t>(out, h.global_seed);
  bin::put_uint<std::uint64_t>(out, h.candidates_tried);
  bin::put_string(out, h.hand_name);
}

void write_record(std::ostream& out, const DatasetRecord& r, std::uint32_t joint_count) {
  if (r.config.size() != joint_count)
    throw DimensionError("record has " + std::to_string(r.config.size()) + " joints, header says " +
                         std::to_string(joint_count));
  bin::put_uint<std::uint64_t>(out, r.record_seed);
  for (double v : r.config.normalized()) bin::put_f32(out, static_cast<float>(v));
  const auto n = static_cast<std::uint32_t>(r.cloud.size());
  bin::put_uint<std::uint32_t>(out, n);
  for (const Vec3& p : r.cloud.points)
    for (int k = 0; k < 3; ++k) bin::put_f32(out, static_cast<float>(p[k]));
  for (const Vec3& p : r.cloud.normals)
    for (int k = 0; k < 3; ++k) bin::put_f32(out, static_cast<float>(p[k]));
  for (std::uint16_t id : r.cloud.link_ids) bin::put_uint<std::uint16_t>(out, id);
}

DatasetRecord read_record(std::istream& in, const DatasetHeader& h) {
  DatasetRecord r;
  r.record_seed = bin::get_uint<std::uint64_t>(in);
  std::vector<double> q(h.joint_count);
  for (double& v : q) v = bin::get_f32(in);
  r.config = JointConfig(std::move(q));
  const auto n = bin::get_uint<std::uint32_t>(in);
  if (h.points_per_record != 0 && n != h.points_per_record)
    throw IoError("record has " + std::to_string(n) + " points, header says " +
                  std::to_string(h.points_per_record));
  r.cloud.variant = h.variant;
  r.cloud.points.resize(n);
  r.cloud.normals.resize(n);
  r.cloud.link_ids.resize(n);
  for (Vec3& p : r.cloud.points)
    for (int k = 0; k < 3; ++k) p[k] = bin::get_f32(in);
  for (Vec3& p : r.cloud.normals)
    for (int k = 0; k < 3; ++k) p[k] = bin::get_f32(in);
  for (auto& id : r.cloud.link_ids) id = bin::get_uint<std::uint16_t>(in);
  return r;
}

std::uint32_t common_point_count(const std::vector<DatasetRecord>& records) {
  if (records.empty()) return 0;
  const std::size_t n = records.front().cloud.size();
  for (const auto& r : records)
    if (r.cloud.size() != n) return 0;
  return static_cast<std::uint32_t>(n);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  if (*b == '+') ++b;
  auto [ptr, ec] = std::from_chars(b, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

std::string split_name(SplitTag s) {
  switch (s) {
    case SplitTag::All:
      return "all";
    case SplitTag::Train:
      return "train";
    case SplitTag::Test:
      return "test";
  }
  return "unknown";
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  DatasetHeader h = dataset.header;
  h.record_count = dataset.records.size();
  write_header(out, h);
  for (const auto& r : dataset.records) write_record(out, r, h.joint_count);
  if (!out) throw IoError("failed to write dataset");
}

Dataset read_dataset(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kDatasetMagic)
    throw IoError("not a dataset file (bad magic)");
  Dataset d;
  DatasetHeader& h = d.header;
  h.version = bin::get_uint<std::uint16_t>(in);
  if (h.version != kDatasetVersion)
    throw IoError("unsupported dataset version " + std::to_string(h.version));
  const auto variant = bin::get_uint<std::uint8_t>(in);
  if (variant > 2) throw IoError("bad variant tag " + std::to_string(variant));
  h.variant = static_cast<Variant>(variant);
  const auto split_tag = bin::get_uint<std::uint8_t>(in);
  if (split_tag > 2) throw IoError("bad split tag " + std::to_string(split_tag));
  h.split = static_cast<SplitTag>(split_tag);
  h.joint_count = bin::get_uint<std::uint32_t>(in);
  h.points_per_record = bin::get_uint<std::uint32_t>(in);
  h.record_count = bin::get_uint<std::uint64_t>(in);
  h.global_seed = bin::get_uint<std::uint64_t>(in);
  h.candidates_tried = bin::get_uint<std::uint64_t>(in);
  h.hand_name = bin::get_string(in);
  d.records.reserve(std::min<std::uint64_t>(h.record_count, 1u << 20));
  for (std::uint64_t i = 0; i < h.record_count; ++i) d.records.push_back(read_record(in, h));
  if (in.peek() != std::char_traits<char>::eof())
    throw IoError("trailing bytes after " + std::to_string(h.record_count) + " records");
  return d;
}

void save_dataset(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  write_dataset(out, dataset);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_dataset(in);
}

Dataset quantize(const Dataset& dataset) {
  Dataset d = dataset;
  for (auto& r : d.records) {
    std::vector<double> q = r.config.normalized();
    for (double& v : q) v = f32(v);
    r.config = JointConfig(std::move(q));
    for (auto& p : r.cloud.points) p = p.unaryExpr([](double v) { return f32(v); });
    for (auto& p : r.cloud.normals) p = p.unaryExpr([](double v) { return f32(v); });
  }
  return d;
}

JointConfig draw_candidate(std::size_t joint_count, std::uint64_t global_seed, std::uint64_t index) {
  Rng rng(mix_seed(global_seed, index));
  std::vector<double> q(joint_count);
  for (double& v : q) v = f32(rng.uniform());
  return JointConfig(std::move(q));
}

GenerateSummary generate(const HandModel& model, const SamplingSpec& spec, const CollisionPolicy& policy,
                         const GenerateOptions& options, std::ostream& out) {
  if (options.count < 1) throw ValidationError("dataset size must be at least 1");
  const std::size_t cap = options.max_candidates == 0 ? 100 * options.count : options.max_candidates;
  const std::size_t n_joints = model.joint_count();
  const CloudTemplate tmpl = make_template(model, spec);

  // Phase 1: find the first `count` valid candidate indices.
  std::vector<std::uint64_t> accepted;
  accepted.reserve(options.count);
  std::size_t tried = 0;
  constexpr std::size_t kBlock = 4096;
  while (accepted.size() < options.count) {
    if (tried >= cap)
      throw Error("only " + std::to_string(accepted.size()) + " of " + std::to_string(options.count) +
                  " collision-free configurations found within " + std::to_string(cap) + " candidates");
    const std::size_t block = std::min(kBlock, cap - tried);
    std::vector<char> valid(block, 0);
    parallel_for(block, options.jobs, [&](std::size_t k) {
      const JointConfig q = draw_candidate(n_joints, options.global_seed, tried + k);
      valid[k] = is_valid(model, q, policy) ? 1 : 0;
    });
    std::size_t consumed = block;
    for (std::size_t k = 0; k < block; ++k) {
      if (!valid[k]) continue;
      accepted.push_back(tried + k);
      if (accepted.size() == options.count) {
        consumed = k + 1;
        break;
      }
    }
    tried += consumed;
  }

  DatasetHeader h;
  h.variant = spec.variant;
  h.joint_count = static_cast<std::uint32_t>(n_joints);
  h.points_per_record = static_cast<std::uint32_t>(tmpl.output_size());
  h.record_count = accepted.size();
  h.global_seed = options.global_seed;
  h.candidates_tried = tried;
  h.hand_name = model.name;
  write_header(out, h);

  // Phase 2: build clouds block by block, write in acceptance order.
  constexpr std::size_t kWriteBlock = 1024;
  for (std::size_t start = 0; start < accepted.size(); start += kWriteBlock) {
    const std::size_t block = std::min(kWriteBlock, accepted.size() - start);
    std::vector<DatasetRecord> records(block);
    parallel_for(block, options.jobs, [&](std::size_t k) {
      const std::uint64_t index = accepted[start + k];
      DatasetRecord& r = records[k];
      r.config = draw_candidate(n_joints, options.global_seed, index);
      r.record_seed = mix_seed(options.global_seed, index);
      r.cloud = build_cloud(model, r.config, tmpl);
    });
    for (const auto& r : records) write_record(out, r, h.joint_count);
  }
  if (!out) throw IoError("failed to write dataset");

  GenerateSummary summary;
  summary.records = accepted.size();
  summary.candidates_tried = tried;
  summary.retention_rate = static_cast<double>(accepted.size()) / static_cast<double>(tried);
  return summary;
}

GenerateSummary generate_file(const HandModel& model, const SamplingSpec& spec,
                              const CollisionPolicy& policy, const GenerateOptions& options,
                              const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  return generate(model, spec, policy, options, out);
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError("train fraction must be in (0, 1)");
  const std::size_t m = dataset.records.size();
  if (m < 2) throw ValidationError("need at least 2 records to split");

  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(mix_seed(seed, 0x5b117));
  for (std::size_t i = m - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(m)));
  std::vector<std::size_t> train_idx(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  auto subset = [&](const std::vector<std::size_t>& idx, SplitTag tag) {
    Dataset d;
    d.header = dataset.header;
    d.header.split = tag;
    d.records.reserve(idx.size());
    for (auto i : idx) d.records.push_back(dataset.records[i]);
    d.header.record_count = d.records.size();
    d.header.points_per_record = common_point_count(d.records);
    return d;
  };
  return {subset(train_idx, SplitTag::Train), subset(test_idx, SplitTag::Test)};
}

DatasetStats stats(const Dataset& dataset) {
  if (dataset.records.empty()) throw ValidationError("dataset is empty");
  const std::size_t n = dataset.header.joint_count;
  const auto m = static_cast<double>(dataset.records.size());
  DatasetStats s;
  s.per_joint_mean.assign(n, 0.0);
  s.per_joint_std.assign(n, 0.0);
  s.histogram.assign(n, {});
  double pooled_sum = 0.0;
  for (const auto& r : dataset.records) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = r.config[j];
      s.per_joint_mean[j] += v;
      pooled_sum += v;
      const auto bin = std::min<std::size_t>(static_cast<std::size_t>(v * kHistogramBins), kHistogramBins - 1);
      ++s.histogram[j][bin];
    }
  }
  for (double& mean : s.per_joint_mean) mean /= m;
  s.pooled_mean = pooled_sum / (m * static_cast<double>(n));
  double pooled_sq = 0.0;
  for (const auto& r : dataset.records) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = r.config[j] - s.per_joint_mean[j];
      s.per_joint_std[j] += d * d;
      const double dp = r.config[j] - s.pooled_mean;
      pooled_sq += dp * dp;
    }
  }
  for (double& sd : s.per_joint_std) sd = std::sqrt(sd / m);
  s.pooled_std = n == 0 ? 0.0 : std::sqrt(pooled_sq / (m * static_cast<double>(n)));
  const std::uint64_t tried = std::max<std::uint64_t>(dataset.header.candidates_tried, dataset.records.size());
  s.retention_rate = m / static_cast<double>(tried);
  return s;
}

std::string stats_csv(const DatasetStats& s, const std::vector<std::string>& joint_names) {
  std::ostringstream out;
  out.precision(17);
  auto name = [&](std::size_t j) { return j < joint_names.size() ? joint_names[j] : std::to_string(j); };
  out << "joint,mean,std\n";
  for (std::size_t j = 0; j < s.per_joint_mean.size(); ++j)
    out << name(j) << ',' << s.per_joint_mean[j] << ',' << s.per_joint_std[j] << '\n';
  out << "pooled," << s.pooled_mean << ',' << s.pooled_std << '\n';
  out << "retention_rate," << s.retention_rate << ",\n";
  out << "\njoint,bin_lo,bin_hi,count\n";
  for (std::size_t j = 0; j < s.histogram.size(); ++j)
    for (std::size_t b = 0; b < kHistogramBins; ++b)
      out << name(j) << ',' << static_cast<double>(b) / kHistogramBins << ','
          << static_cast<double>(b + 1) / kHistogramBins << ',' << s.histogram[j][b] << '\n';
  return out.str();
}

IngestResult ingest_external_configs(const std::string& csv_text, const HandModel& model,
                                     const CloudTemplate& tmpl) {
  const std::size_t n = model.joint_count();
  IngestResult result;
  result.dataset.header.variant = tmpl.spec.variant;
  result.dataset.header.joint_count = static_cast<std::uint32_t>(n);
  result.dataset.header.hand_name = model.name;
  result.dataset.header.global_seed = tmpl.spec.seed;

  std::istringstream in(csv_text);
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    std::vector<double> values(cells.size());
    bool all_numeric = true;
    bool any_numeric = false;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const bool ok = parse_double(cells[c], values[c]);
      all_numeric = all_numeric && ok;
      any_numeric = any_numeric || ok;
    }
    if (first && !any_numeric) {
      first = false;
      continue;  // header row
    }
    first = false;
    if (cells.size() != n)
      throw ParseError("row has " + std::to_string(cells.size()) + " columns, expected " +
                       std::to_string(n),
                       line_no);
    if (!all_numeric) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        double dummy;
        if (!parse_double(cells[c], dummy))
          throw ParseError("column " + std::to_string(c + 1) + ": '" + cells[c] + "' is not a number",
                           line_no);
      }
    }
    for (std::size_t j = 0; j < n; ++j) {
      const Joint& joint = model.joints[j];
      if (values[j] < joint.limit_lo - kLimitTolerance || values[j] > joint.limit_hi + kLimitTolerance)
        ++result.clamped;
      values[j] = std::clamp(values[j], joint.limit_lo, joint.limit_hi);
    }
    DatasetRecord r;
    r.config = JointConfig::from_radians(model, values);
    r.record_seed = result.rows;
    r.cloud = build_cloud(model, r.config, tmpl);
    result.dataset.records.push_back(std::move(r));
    ++result.rows;
  }
  result.dataset.header.record_count = result.dataset.records.size();
  result.dataset.header.candidates_tried = result.dataset.records.size();
  result.dataset.header.points_per_record = common_point_count(result.dataset.records);
  return result;
}

}  // namespace gripcvae
