#include "gripcvae/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "gripcvae/errors.hpp"
#include "gripcvae/parallel.hpp"
#include "gripcvae/random.hpp"

namespace gripcvae {

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double max_pairwise(const std::vector<Vec3>& pts) {
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, (pts[i] - pts[j]).squaredNorm());
  return std::sqrt(best);
}

}  // namespace

std::vector<double> max_keypoint_displacement(const HandModel& model, std::size_t sample_budget, std::uint64_t seed) {
  const std::size_t L = model.link_count();
  std::vector<std::vector<Vec3>> positions(L);

  std::vector<double> base(model.joint_count());
  for (std::size_t j = 0; j < base.size(); ++j)
    base[j] = std::clamp(0.0, model.joints[j].limit_lo, model.joints[j].limit_hi);

  for (std::size_t l = 0; l < L; ++l) {
    const auto ancestors = model.ancestor_joints(l);
    if (ancestors.size() > 16) continue;
    for (std::uint32_t mask = 0; mask < (1u << ancestors.size()); ++mask) {
      std::vector<double> q = base;
      for (std::size_t a = 0; a < ancestors.size(); ++a) {
        const Joint& jt = model.joints[ancestors[a]];
        q[ancestors[a]] = (mask >> a) & 1u ? jt.limit_hi : jt.limit_lo;
      }
      const auto frames = forward_kinematics_radians(model, q);
      positions[l].push_back(frames[l].apply(model.links[l].keypoint));
    }
  }
  for (std::size_t s = 0; s < sample_budget; ++s) {
    Rng rng(mix_seed(seed, s));
    std::vector<double> q(model.joint_count());
    for (double& v : q) v = rng.uniform();
    const auto kp = link_keypoints(model, JointConfig(std::move(q)));
    for (std::size_t l = 0; l < L; ++l) positions[l].push_back(kp[l]);
  }

  std::vector<double> out(L);
  for (std::size_t l = 0; l < L; ++l) out[l] = max_pairwise(positions[l]);
  return out;
}

Normalizers make_normalizers(const HandModel& model, std::size_t sample_budget, std::uint64_t seed) {
  Normalizers n;
  for (const Joint& j : model.joints) n.joint_range.push_back(j.range());
  n.keypoint_displacement = max_keypoint_displacement(model, sample_budget, seed);
  for (std::size_t l = 0; l < n.keypoint_displacement.size(); ++l)
    if (!(n.keypoint_displacement[l] > 1e-9)) n.immobile_links.push_back(l);
  return n;
}

ErrorValue joint_error(const JointConfig& truth, const JointConfig& pred, const HandModel& model,
                       std::span<const std::size_t> joints) {
  const std::size_t N = model.joint_count();
  if (truth.size() != N || pred.size() != N)
    throw DimensionError("joint_error: expected " + std::to_string(N) + " joints, got " +
                         std::to_string(truth.size()) + " and " + std::to_string(pred.size()));
  std::vector<std::size_t> all;
  if (joints.empty()) {
    all.resize(N);
    for (std::size_t i = 0; i < N; ++i) all[i] = i;
    joints = all;
  }
  ErrorValue e;
  if (joints.empty()) return e;
  for (std::size_t i : joints) {
    const Joint& jt = model.joints[i];
    const double d = std::abs(denormalize(jt, truth[i]) - denormalize(jt, pred[i]));
    e.value += d;
    e.pct += 100.0 * d / jt.range();
  }
  e.value /= static_cast<double>(joints.size());
  e.pct /= static_cast<double>(joints.size());
  return e;
}

ErrorValue cartesian_error(const JointConfig& truth, const JointConfig& pred, const HandModel& model,
                           const Normalizers* norms, std::span<const std::size_t> links) {
  if (truth.size() != model.joint_count() || pred.size() != model.joint_count())
    throw DimensionError("cartesian_error: configuration size does not match the hand");
  const auto a = link_keypoints(model, truth);
  const auto b = link_keypoints(model, pred);
  std::vector<std::size_t> all;
  if (links.empty()) {
    all.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) all[i] = i;
    links = all;
  }
  ErrorValue e;
  std::size_t mobile = 0;
  for (std::size_t l : links) {
    const double d = (a[l] - b[l]).norm();
    e.value += d;
    if (norms && norms->keypoint_displacement[l] > 1e-9) {
      e.pct += 100.0 * d / norms->keypoint_displacement[l];
      ++mobile;
    }
  }
  if (!links.empty()) e.value /= static_cast<double>(links.size());
  e.pct = mobile ? e.pct / static_cast<double>(mobile) : 0.0;
  return e;
}

Predictor cvae_predictor(const CvaeModel& model) {
  return [&model](std::span<const PredictRequest> requests, std::size_t samples) {
    std::vector<const PointCloud*> clouds;
    std::vector<std::uint64_t> seeds;
    for (const auto& r : requests) {
      clouds.push_back(r.cloud);
      seeds.push_back(r.seed);
    }
    return infer_batch(model, clouds, samples, seeds);
  };
}

Predictor constant_predictor(const JointConfig& q) {
  return [q](std::span<const PredictRequest> requests, std::size_t samples) {
    return std::vector<std::vector<JointConfig>>(requests.size(), std::vector<JointConfig>(samples, q));
  };
}

JointConfig mean_config(const Dataset& data) {
  if (data.records.empty()) throw ValidationError("mean_config of an empty dataset");
  std::vector<double> m(data.records[0].config.size(), 0.0);
  for (const auto& r : data.records)
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += r.config[j];
  for (double& v : m) v /= static_cast<double>(data.records.size());
  return JointConfig(std::move(m));
}

std::vector<ChainSlice> chain_slices(const HandModel& model) {
  std::vector<ChainSlice> out;
  const auto chains = model.chains();
  const auto names = model.chain_names();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    ChainSlice s;
    s.name = names[c];
    s.joints = chains[c];
    std::set<std::size_t> links;
    for (std::size_t j : chains[c])
      for (std::size_t l : model.subtree_links(j)) links.insert(l);
    s.links.assign(links.begin(), links.end());
    out.push_back(std::move(s));
  }
  return out;
}

Aggregate aggregate(std::span<const double> values) {
  Aggregate a;
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(values.size());
  for (double v : values) a.std += (v - a.mean) * (v - a.mean);
  a.std = std::sqrt(a.std / static_cast<double>(values.size()));
  return a;
}

void check_compatible(const CvaeModel& model, const Dataset& data) {
  if (model.hand_name != data.header.hand_name)
    throw ValidationError("hand mismatch: checkpoint was trained on '" + model.hand_name + "', dataset uses '" +
                          data.header.hand_name + "'");
  if (model.variant != data.header.variant)
    throw ValidationError("variant mismatch: checkpoint is " + variant_name(model.variant) + ", dataset is " +
                          variant_name(data.header.variant));
  if (model.config.joint_count != data.header.joint_count)
    throw ValidationError("joint count mismatch: checkpoint has " + std::to_string(model.config.joint_count) +
                          ", dataset has " + std::to_string(data.header.joint_count));
}

Aggregate time_inference(const Dataset& data, const Predictor& predictor, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size == 0) throw ValidationError("timing batch size must be positive");
  std::vector<double> per_sample;
  double total_ms = 0.0;
  for (std::size_t start = 0; start < data.records.size(); start += batch_size) {
    const std::size_t end = std::min(data.records.size(), start + batch_size);
    std::vector<PredictRequest> req;
    for (std::size_t i = start; i < end; ++i) req.push_back({i, &data.records[i].cloud, mix_seed(seed, i)});
    const auto t0 = std::chrono::steady_clock::now();
    auto out = predictor(req, 1);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (out.size() != req.size()) throw ValidationError("predictor returned the wrong number of results");
    total_ms += ms;
    per_sample.push_back(ms / static_cast<double>(end - start));
  }
  Aggregate a = aggregate(per_sample);
  if (!data.records.empty()) a.mean = total_ms / static_cast<double>(data.records.size());
  return a;
}

EvalResult evaluate(const HandModel& model, const Dataset& data, const Predictor& predictor,
                    const EvalOptions& options) {
  if (options.samples == 0) throw ValidationError("samples must be at least 1");
  if (options.batch_size == 0) throw ValidationError("batch size must be positive");
  if (data.header.joint_count != model.joint_count())
    throw ValidationError("dataset has " + std::to_string(data.header.joint_count) + " joints, hand has " +
                          std::to_string(model.joint_count()));
  EvalResult res;
  res.normalizers = make_normalizers(model, options.displacement_budget, options.seed);
  res.chains = chain_slices(model);
  const std::size_t M = data.records.size();
  res.records.resize(M);
  res.predictions.resize(M);

  const std::size_t batches = (M + options.batch_size - 1) / options.batch_size;
  parallel_for(batches, options.jobs, [&](std::size_t b) {
    const std::size_t start = b * options.batch_size;
    const std::size_t end = std::min(M, start + options.batch_size);
    std::vector<PredictRequest> req;
    for (std::size_t i = start; i < end; ++i) req.push_back({i, &data.records[i].cloud, mix_seed(options.seed, i)});
    const auto preds = predictor(req, options.samples);
    if (preds.size() != req.size()) throw ValidationError("predictor returned the wrong number of results");
    for (std::size_t r = 0; r < req.size(); ++r) {
      const std::size_t i = start + r;
      const JointConfig& truth = data.records[i].config;
      if (preds[r].size() != options.samples) throw ValidationError("predictor returned the wrong sample count");
      RecordMetrics& m = res.records[i];
      m.record = i;
      m.record_seed = data.records[i].record_seed;
      for (std::size_t k = 0; k < options.samples; ++k) {
        const ErrorValue je = joint_error(truth, preds[r][k], model);
        const ErrorValue ce = cartesian_error(truth, preds[r][k], model, &res.normalizers);
        if (k == 0) {
          m.joint = m.lowest_joint = je;
          m.cartesian = m.lowest_cartesian = ce;
        } else {
          if (je.value < m.lowest_joint.value) m.lowest_joint = je;
          if (ce.value < m.lowest_cartesian.value) m.lowest_cartesian = ce;
        }
      }
      for (const ChainSlice& s : res.chains) {
        m.chain_joint.push_back(joint_error(truth, preds[r][0], model, s.joints));
        m.chain_cartesian.push_back(cartesian_error(truth, preds[r][0], model, &res.normalizers, s.links));
      }
      res.predictions[i] = preds[r][0];
    }
  });

  auto column = [&](auto get) {
    std::vector<double> v;
    v.reserve(M);
    for (const auto& r : res.records) v.push_back(get(r));
    return v;
  };
  auto summarize = [&](auto value, auto pct) {
    const auto vals = column(value);
    const auto pcts = column(pct);
    Aggregate a = aggregate(vals);
    a.pct = aggregate(pcts).mean;
    return a;
  };
  MetricReport& rep = res.report;
  rep.samples = options.samples;
  rep.record_count = M;
  rep.joint_error_rad = summarize([](const RecordMetrics& r) { return r.joint.value; },
                                  [](const RecordMetrics& r) { return r.joint.pct; });
  rep.cartesian_error_mm = summarize([](const RecordMetrics& r) { return r.cartesian.value; },
                                     [](const RecordMetrics& r) { return r.cartesian.pct; });
  rep.lowest_joint_error_rad = summarize([](const RecordMetrics& r) { return r.lowest_joint.value; },
                                         [](const RecordMetrics& r) { return r.lowest_joint.pct; });
  rep.lowest_cartesian_error_mm = summarize([](const RecordMetrics& r) { return r.lowest_cartesian.value; },
                                            [](const RecordMetrics& r) { return r.lowest_cartesian.pct; });
  for (std::size_t c = 0; c < res.chains.size(); ++c) {
    rep.chain_joint_error_rad.push_back(summarize([c](const RecordMetrics& r) { return r.chain_joint[c].value; },
                                                  [c](const RecordMetrics& r) { return r.chain_joint[c].pct; }));
    rep.chain_cartesian_error_mm.push_back(
        summarize([c](const RecordMetrics& r) { return r.chain_cartesian[c].value; },
                  [c](const RecordMetrics& r) { return r.chain_cartesian[c].pct; }));
  }
  if (options.timing_batch > 0 && M > 0)
    rep.inference_time_ms = time_inference(data, predictor, options.timing_batch, options.seed);
  return res;
}

std::string report_csv(const EvalResult& result) {
  std::ostringstream out;
  out << "record,record_seed,joint_rad,joint_pct,cartesian_mm,cartesian_pct,lowest_joint_rad,lowest_joint_pct,"
         "lowest_cartesian_mm,lowest_cartesian_pct";
  for (const auto& c : result.chains)
    out << ',' << c.name << "_joint_rad," << c.name << "_joint_pct," << c.name << "_cartesian_mm," << c.name
        << "_cartesian_pct";
  out << '\n';
  for (const auto& r : result.records) {
    out << r.record << ',' << r.record_seed << ',' << num(r.joint.value) << ',' << num(r.joint.pct) << ','
        << num(r.cartesian.value) << ',' << num(r.cartesian.pct) << ',' << num(r.lowest_joint.value) << ','
        << num(r.lowest_joint.pct) << ',' << num(r.lowest_cartesian.value) << ',' << num(r.lowest_cartesian.pct);
    for (std::size_t c = 0; c < r.chain_joint.size(); ++c)
      out << ',' << num(r.chain_joint[c].value) << ',' << num(r.chain_joint[c].pct) << ','
          << num(r.chain_cartesian[c].value) << ',' << num(r.chain_cartesian[c].pct);
    out << '\n';
  }
  return out.str();
}

std::string summary_csv(const EvalResult& result, const std::string& preamble) {
  const MetricReport& rep = result.report;
  std::ostringstream out;
  out << "# hardware: " << hardware_description() << '\n';
  out << "# records: " << rep.record_count << ", samples per record: " << rep.samples << '\n';
  if (!result.normalizers.immobile_links.empty())
    out << "# immobile keypoints left out of cartesian pct: " << result.normalizers.immobile_links.size() << '\n';
  if (!preamble.empty()) out << preamble;
  out << "metric,mean,std,pct\n";
  auto row = [&](const std::string& name, const Aggregate& a, bool with_pct = true) {
    out << name << ',' << num(a.mean) << ',' << num(a.std) << ',' << (with_pct ? num(a.pct) : std::string()) << '\n';
  };
  row("joint_error_rad", rep.joint_error_rad);
  row("cartesian_error_mm", rep.cartesian_error_mm);
  row("lowest_joint_error_rad", rep.lowest_joint_error_rad);
  row("lowest_cartesian_error_mm", rep.lowest_cartesian_error_mm);
  row("inference_time_ms", rep.inference_time_ms, false);
  for (std::size_t c = 0; c < result.chains.size(); ++c) {
    row(result.chains[c].name + "_joint_error_rad", rep.chain_joint_error_rad[c]);
    row(result.chains[c].name + "_cartesian_error_mm", rep.chain_cartesian_error_mm[c]);
  }
  return out.str();
}

std::vector<std::string> write_gnuplot(const std::string& dir, const HandModel& model, const Dataset& data,
                                       const EvalResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::size_t N = model.joint_count();
  constexpr std::size_t bins = kHistogramBins;
  const fs::path dat = fs::path(dir) / "joint_hist.dat";
  const fs::path gp = fs::path(dir) / "joint_hist.gp";
  std::ofstream d(dat);
  if (!d) throw IoError("cannot write " + dat.string());
  for (std::size_t j = 0; j < N; ++j) {
    std::vector<std::size_t> truth(bins, 0), pred(bins, 0);
    auto bin = [](double v) { return std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, v) * bins)); };
    for (std::size_t i = 0; i < data.records.size(); ++i) {
      ++truth[bin(data.records[i].config[j])];
      if (i < result.predictions.size() && result.predictions[i].size() == N) ++pred[bin(result.predictions[i][j])];
    }
    d << "# " << model.joints[j].name << "\n# bin_center true predicted\n";
    for (std::size_t b = 0; b < bins; ++b)
      d << (static_cast<double>(b) + 0.5) / bins << ' ' << truth[b] << ' ' << pred[b] << '\n';
    d << "\n\n";
  }
  std::ofstream g(gp);
  if (!g) throw IoError("cannot write " + gp.string());
  const std::size_t cols = 4;
  g << "set terminal pngcairo size 1600," << 300 * ((N + cols - 1) / cols) << "\n";
  g << "set output 'joint_hist.png'\n";
  g << "set style data histograms\nset style fill solid 0.5\nset boxwidth 0.045\n";
  g << "set multiplot layout " << (N + cols - 1) / cols << "," << cols << "\n";
  for (std::size_t j = 0; j < N; ++j)
    g << "set title '" << model.joints[j].name << "'\nplot 'joint_hist.dat' index " << j
      << " using 1:2 with boxes title 'true', '' index " << j << " using 1:3 with linespoints title 'predicted'\n";
  g << "unset multiplot\n";
  return {dat.string(), gp.string()};
}

std::string hardware_description() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(colon + 2);
      break;
    }
  }
  return cpu + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " hardware threads";
}

}  // namespace gripcvae
