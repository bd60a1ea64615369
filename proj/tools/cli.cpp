#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gripcvae/collision.hpp"
#include "gripcvae/cvae.hpp"
#include "gripcvae/dataset.hpp"
#include "gripcvae/errors.hpp"
#include "gripcvae/eval.hpp"
#include "gripcvae/hand_model.hpp"
#include "gripcvae/parallel.hpp"
#include "gripcvae/pointcloud.hpp"

namespace gripcvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

std::string fmt(double v, const char* spec = "%.9g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Everything a subcommand needs besides its own flags.
struct Context {
  std::vector<std::string> argv;
  std::ostream& out;
  std::ostream& err;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
};

struct Manifest {
  std::string subcommand;
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::object();
};

void write_manifest(const Context& ctx, const CLI::App& sub, const Manifest& m, const fs::path& path) {
  json config = json::object();
  std::istringstream lines(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.empty() || line[0] == '#' || line[0] == '[') continue;
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    config[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  json j = {
      {"tool", "gripcvae"},
      {"version", kVersion},
      {"subcommand", m.subcommand},
      {"argv", ctx.argv},
      {"config", config},
      {"seeds", m.seeds},
      {"inputs", m.inputs},
      {"outputs", m.outputs},
      {"started_utc", utc_now()},
      {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - ctx.start).count()},
  };
  write_text(path, j.dump(2) + "\n");
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    cell.erase(0, cell.find_first_not_of(" \t"));
    cell.erase(cell.find_last_not_of(" \t") + 1);
    if (cell.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ValidationError("not a number: '" + cell + "'");
    }
  }
  return values;
}

JointConfig config_from_text(const HandModel& model, const std::string& text, bool normalized) {
  const auto v = parse_list(text);
  if (v.size() != model.joint_count())
    throw ValidationError("expected " + std::to_string(model.joint_count()) + " joint values, got " +
                          std::to_string(v.size()));
  return normalized ? JointConfig(v) : JointConfig::from_radians(model, v);
}

struct HandArgs {
  std::string urdf;
  std::string annotations;

  void add(CLI::App* sub, bool required = true) {
    auto* o = sub->add_option("--hand", urdf, "Hand description (URDF subset)")->check(CLI::ExistingFile);
    if (required) o->required();
    sub->add_option("--annotations", annotations, "Hand annotation JSON (default: <hand>.hand.json)");
  }
  HandModel load() const { return load_hand(urdf, annotations); }
};

struct SamplingArgs {
  std::string variant = "dense";
  std::size_t points = 0;
  double cluster_fraction = 0.5;
  double handprint_threshold = 0.0;
  std::string allocation = "area";
  std::size_t fps_oversample = 1;

  void add(CLI::App* sub) {
    sub->add_option("--variant", variant, "Point cloud variant")
        ->check(CLI::IsMember({"dense", "cluster", "handprint"}))
        ->capture_default_str();
    sub->add_option("--points", points,
                    "Surface samples in the cloud template (0: 512, or 16384 for cluster)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    sub->add_option("--cluster-frac", cluster_fraction, "Cluster radius as a fraction of the link radius")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--dot-threshold", handprint_threshold, "Minimum normal/palm-normal dot product")
        ->check(CLI::Range(-1.0, 1.0))
        ->capture_default_str();
    sub->add_option("--allocation", allocation, "Points per link: area-weighted or equal")
        ->check(CLI::IsMember({"area", "equal"}))
        ->capture_default_str();
    sub->add_option("--fps-oversample", fps_oversample, "Oversampling factor for farthest-point thinning")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  SamplingSpec spec(std::uint64_t seed) const {
    SamplingSpec s;
    s.variant = parse_variant(variant);
    s.total_points = points > 0 ? points : (s.variant == Variant::Cluster ? 16384 : 512);
    s.cluster_radius_fraction = cluster_fraction;
    s.handprint_dot_threshold = handprint_threshold;
    s.allocation = allocation == "equal" ? Allocation::EqualPerLink : Allocation::AreaWeighted;
    s.fps_oversample = fps_oversample;
    s.seed = seed;
    return s;
  }
};

CLI::Option* add_seed(CLI::App* sub, std::uint64_t& seed) {
  return sub->add_option("--seed", seed, "Root seed (fallback: GRIPCVAE_SEED)")
      ->envname("GRIPCVAE_SEED")
      ->capture_default_str();
}

CLI::Option* add_jobs(CLI::App* sub, std::size_t& jobs) {
  return sub->add_option("--jobs", jobs, "Worker threads (0: all cores); results do not depend on it")
      ->capture_default_str();
}

std::size_t resolve_jobs(std::size_t jobs) { return jobs == 0 ? default_jobs() : jobs; }

CollisionPolicy load_policy(const HandModel& model, const std::string& path) {
  return path.empty() ? default_collision_policy(model) : load_collision_policy(model, read_text(path));
}

std::string strip(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

/// Splices the settings of `--config-file` into the argument list, ahead of
/// the explicit flags, so that flags given on the command line win. Keys
/// outside any section, or inside [<subcommand>], apply.
std::vector<std::string> splice_config_file(const std::vector<std::string>& args, CLI::App& app) {
  if (args.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr) return args;
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config-file" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config-file=", 0) == 0) path = args[i].substr(14);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw CLI::FileError::Missing(path);

  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin() + 1, args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> injected;
  std::string section;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[' && line.back() == ']') {
      section = strip(line.substr(1, line.size() - 2));
      continue;
    }
    if (!section.empty() && section != sub->get_name()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw CLI::ConversionError(path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = strip(line.substr(0, eq));
    std::string value = strip(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') value = value.substr(1, value.size() - 2);
    const std::string flag = "--" + key;
    if (key == "config-file") continue;
    const CLI::Option* opt = sub->get_option_no_throw(flag);
    if (opt == nullptr)
      throw CLI::ExtrasError(path + ":" + std::to_string(line_no) + ": unknown setting '" + key + "' for " +
                                 sub->get_name(),
                             CLI::ExitCodes::ExtrasError);
    if (given(flag)) continue;
    if (opt->get_type_size() == 0) {
      if (value == "true" || value == "1") injected.push_back(flag);
    } else if (!value.empty()) {
      injected.push_back(flag);
      injected.push_back(value);
    }
  }
  std::vector<std::string> out{args[0]};
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

// Seeds derived from the root seed, one stream per purpose.
constexpr std::uint64_t kTemplateStream = 1;
constexpr std::uint64_t kConfigStream = 2;

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{args, out, err};
  CLI::App app{"Grasp-configuration CVAE toolkit: hand models, datasets, training and evaluation", "gripcvae"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.get_formatter()->column_width(44);

  bool dry_run = false;
  std::string manifest_override;
  std::function<void()> action;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config-file", "Read option values from a key=value file; flags take precedence")
        ->check(CLI::ExistingFile);
    sub->add_flag("--dry-run", dry_run, "Validate the flags and print the resolved settings, then stop");
    sub->add_option("--manifest", manifest_override, "Where to write the run manifest");
  };
  auto finish = [&](CLI::App* sub, Manifest m, const fs::path& default_path) {
    const fs::path path = manifest_override.empty() ? default_path : fs::path(manifest_override);
    if (path.empty()) return;
    write_manifest(ctx, *sub, m, path);
  };
  auto dry = [&](CLI::App* sub) {
    if (!dry_run) return false;
    out << sub->config_to_str(true, false);
    return true;
  };

  // ---------------------------------------------------------------- fk
  HandArgs fk_hand;
  std::string fk_config;
  bool fk_normalized = false;
  auto* fk = app.add_subcommand("fk", "Print the world pose of every link");
  fk_hand.add(fk);
  fk->add_option("--config", fk_config, "Comma-separated joint values (radians unless --normalized)")->required();
  fk->add_flag("--normalized", fk_normalized, "Interpret --config as normalized [0, 1] values");
  common(fk);
  fk->callback([&] {
    action = [&] {
      if (dry(fk)) return;
      const HandModel model = fk_hand.load();
      const JointConfig q = config_from_text(model, fk_config, fk_normalized);
      const auto frames = forward_kinematics(model, q);
      const auto keypoints = keypoints_from_transforms(model, frames);
      for (std::size_t l = 0; l < model.link_count(); ++l) {
        const Eigen::Quaterniond r(frames[l].rotation);
        const Vec3& k = keypoints[l];
        out << model.links[l].name << ' ' << fmt(k.x()) << ' ' << fmt(k.y()) << ' ' << fmt(k.z()) << ' '
            << fmt(r.w()) << ' ' << fmt(r.x()) << ' ' << fmt(r.y()) << ' ' << fmt(r.z()) << '\n';
      }
      if (!manifest_override.empty()) finish(fk, {"fk", {}, {{"hand", fk_hand.urdf}}, {}}, {});
    };
  });

  // ---------------------------------------------------------------- collision-check
  HandArgs cc_hand;
  std::string cc_config, cc_policy;
  bool cc_normalized = false;
  auto* cc = app.add_subcommand("collision-check", "Score a configuration for self-collision");
  cc_hand.add(cc);
  cc->add_option("--config", cc_config, "Comma-separated joint values (radians unless --normalized)")->required();
  cc->add_flag("--normalized", cc_normalized, "Interpret --config as normalized [0, 1] values");
  cc->add_option("--policy", cc_policy, "Collision policy JSON (default: radii sums, adjacent links ignored)")
      ->check(CLI::ExistingFile);
  common(cc);
  cc->callback([&] {
    action = [&] {
      if (dry(cc)) return;
      const HandModel model = cc_hand.load();
      const JointConfig q = config_from_text(model, cc_config, cc_normalized);
      const CollisionPolicy policy = load_policy(model, cc_policy);
      const auto kp = link_keypoints(model, q);
      const double score = self_collision_score(kp, policy);
      out << "score " << fmt(score, "%.17g") << '\n' << (score == 0.0 ? "valid" : "collision") << '\n';
      if (!manifest_override.empty())
        finish(cc, {"collision-check", {}, {{"hand", cc_hand.urdf}, {"policy", cc_policy}}, {}}, {});
    };
  });

  // ---------------------------------------------------------------- gen
  HandArgs gen_hand;
  SamplingArgs gen_sampling;
  std::string gen_out, gen_policy;
  std::size_t gen_count = 1000, gen_max_candidates = 0, gen_jobs = 0;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen", "Generate a collision-free dataset");
  gen_hand.add(gen);
  gen_sampling.add(gen);
  gen->add_option("--count", gen_count, "Valid configurations to keep")->check(CLI::PositiveNumber);
  gen->add_option("--max-candidates", gen_max_candidates, "Give up after this many draws (0: 100 x count)");
  gen->add_option("--policy", gen_policy, "Collision policy JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "Output dataset file")->required();
  add_seed(gen, gen_seed);
  add_jobs(gen, gen_jobs);
  common(gen);
  gen->callback([&] {
    action = [&] {
      if (dry(gen)) return;
      const HandModel model = gen_hand.load();
      const CollisionPolicy policy = load_policy(model, gen_policy);
      GenerateOptions opts;
      opts.count = gen_count;
      opts.global_seed = mix_seed(gen_seed, kConfigStream);
      opts.max_candidates = gen_max_candidates;
      opts.jobs = resolve_jobs(gen_jobs);
      const auto summary = generate_file(model, gen_sampling.spec(mix_seed(gen_seed, kTemplateStream)), policy,
                                         opts, gen_out);
      out << "records " << summary.records << "\ncandidates " << summary.candidates_tried << "\nretention "
          << fmt(summary.retention_rate, "%.6f") << '\n';
      finish(gen,
             {"gen",
              {{"seed", gen_seed},
               {"template_seed", mix_seed(gen_seed, kTemplateStream)},
               {"config_seed", opts.global_seed}},
              {{"hand", gen_hand.urdf}, {"policy", gen_policy}},
              {{"dataset", gen_out}}},
             gen_out + ".manifest.json");
    };
  });

  // ---------------------------------------------------------------- split
  std::string split_data, split_train, split_test;
  double split_fraction = 0.8;
  std::uint64_t split_seed = 0;
  auto* sp = app.add_subcommand("split", "Split a dataset into disjoint train and test files");
  sp->add_option("--data", split_data, "Input dataset")->required()->check(CLI::ExistingFile);
  sp->add_option("--train-fraction", split_fraction, "Share of records in the train part")
      ->check(CLI::Range(0.0, 1.0));
  sp->add_option("--train-out", split_train, "Train dataset file")->required();
  sp->add_option("--test-out", split_test, "Test dataset file")->required();
  add_seed(sp, split_seed);
  common(sp);
  sp->callback([&] {
    action = [&] {
      if (dry(sp)) return;
      if (fs::weakly_canonical(split_train) == fs::weakly_canonical(split_test))
        throw ValidationError("--train-out and --test-out name the same file");
      const Dataset d = load_dataset(split_data);
      auto [train_part, test_part] = split(d, split_fraction, split_seed);
      save_dataset(split_train, train_part);
      save_dataset(split_test, test_part);
      out << "train " << train_part.records.size() << "\ntest " << test_part.records.size() << '\n';
      finish(sp, {"split", {{"seed", split_seed}}, {{"data", split_data}}, {{"train", split_train}, {"test", split_test}}},
             split_train + ".manifest.json");
    };
  });

  // ---------------------------------------------------------------- stats
  std::string stats_data, stats_out;
  HandArgs stats_hand;
  auto* st = app.add_subcommand("stats", "Joint statistics and retention of a dataset");
  st->add_option("--data", stats_data, "Input dataset")->required()->check(CLI::ExistingFile);
  stats_hand.add(st, false);
  st->add_option("--out", stats_out, "CSV output file (default: standard output)");
  common(st);
  st->callback([&] {
    action = [&] {
      if (dry(st)) return;
      const Dataset d = load_dataset(stats_data);
      std::vector<std::string> names;
      if (!stats_hand.urdf.empty()) {
        const HandModel model = stats_hand.load();
        if (model.joint_count() != d.header.joint_count)
          throw ValidationError("hand has " + std::to_string(model.joint_count()) + " joints, dataset has " +
                                std::to_string(d.header.joint_count));
        for (const Joint& j : model.joints) names.push_back(j.name);
      } else {
        for (std::size_t j = 0; j < d.header.joint_count; ++j) names.push_back("q" + std::to_string(j));
      }
      const std::string csv = stats_csv(stats(d), names);
      if (stats_out.empty()) {
        out << csv;
      } else {
        write_text(stats_out, csv);
        finish(st, {"stats", {}, {{"data", stats_data}}, {{"csv", stats_out}}}, stats_out + ".manifest.json");
      }
    };
  });

  // ---------------------------------------------------------------- ingest
  HandArgs ing_hand;
  SamplingArgs ing_sampling;
  std::string ing_csv, ing_out;
  std::uint64_t ing_seed = 0;
  auto* ing = app.add_subcommand("ingest", "Build a dataset from external joint-angle rows (radians)");
  ing_hand.add(ing);
  ing_sampling.add(ing);
  ing->add_option("--csv", ing_csv, "CSV with one configuration per row")->required()->check(CLI::ExistingFile);
  ing->add_option("--out", ing_out, "Output dataset file")->required();
  add_seed(ing, ing_seed);
  common(ing);
  ing->callback([&] {
    action = [&] {
      if (dry(ing)) return;
      const HandModel model = ing_hand.load();
      const CloudTemplate tmpl = make_template(model, ing_sampling.spec(mix_seed(ing_seed, kTemplateStream)));
      IngestResult r = ingest_external_configs(read_text(ing_csv), model, tmpl);
      r.dataset.header.global_seed = ing_seed;
      save_dataset(ing_out, r.dataset);
      out << "records " << r.rows << "\nclamped " << r.clamped << '\n';
      if (r.clamped) err << "warning: " << r.clamped << " values were outside their joint limits and clamped\n";
      finish(ing, {"ingest", {{"seed", ing_seed}}, {{"hand", ing_hand.urdf}, {"csv", ing_csv}}, {{"dataset", ing_out}}},
             ing_out + ".manifest.json");
    };
  });

  // ---------------------------------------------------------------- train
  HandArgs tr_hand;
  std::string tr_train, tr_test, tr_out;
  CvaeConfig tr_cfg;
  auto* tr = app.add_subcommand("train", "Train the CVAE");
  tr_hand.add(tr);
  tr->add_option("--train", tr_train, "Training dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--test", tr_test, "Held-out dataset for per-epoch evaluation")->check(CLI::ExistingFile);
  tr->add_option("--out-dir", tr_out, "Directory for checkpoints, log and manifest")->required();
  tr->add_option("--epochs", tr_cfg.epochs, "Training epochs");
  tr->add_option("--batch-size", tr_cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  tr->add_option("--lr", tr_cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  tr->add_option("--latent-dim", tr_cfg.latent_dim, "Latent dimension")->check(CLI::PositiveNumber);
  tr->add_option("--point-mlp", tr_cfg.point_mlp, "Encoder per-point widths")->delimiter(',');
  tr->add_option("--joint-mlp", tr_cfg.joint_mlp, "Encoder joint widths")->delimiter(',');
  tr->add_option("--latent-hidden", tr_cfg.latent_hidden, "Latent encoder hidden widths")->delimiter(',');
  tr->add_option("--decoder-point-mlp", tr_cfg.decoder_point_mlp, "Decoder per-point widths")->delimiter(',');
  tr->add_option("--decoder-head", tr_cfg.decoder_head, "Decoder hidden widths after the latent concat")
      ->delimiter(',');
  tr->add_option("--pool-after", tr_cfg.decoder_pool_after, "Decoder head layers applied per point before pooling");
  tr->add_option("--beta-min", tr_cfg.beta.beta_min, "KL weight before the ramp");
  tr->add_option("--beta-max", tr_cfg.beta.beta_max, "KL weight after the ramp");
  tr->add_option("--beta-ramp-start", tr_cfg.beta.ramp_start, "First epoch of the ramp");
  tr->add_option("--beta-ramp-end", tr_cfg.beta.ramp_end, "First epoch after the ramp");
  tr->add_option("--beta-center", tr_cfg.beta.center, "Ramp midpoint");
  tr->add_option("--beta-steepness", tr_cfg.beta.steepness, "Logistic slope of the ramp");
  add_seed(tr, tr_cfg.seed);
  common(tr);
  tr->callback([&] {
    action = [&] {
      if (dry(tr)) return;
      const HandModel model = tr_hand.load();
      tr_cfg.joint_count = model.joint_count();
      const Dataset train_set = load_dataset(tr_train);
      Dataset test_set;
      if (!tr_test.empty()) {
        test_set = load_dataset(tr_test);
      } else {
        test_set.header = train_set.header;
        test_set.header.record_count = 0;
      }
      fs::create_directories(tr_out);
      const fs::path dir(tr_out);
      std::ofstream log(dir / "train_log.csv");
      if (!log) throw IoError("cannot write " + (dir / "train_log.csv").string());
      TrainOptions opts;
      opts.log = &log;
      opts.best_checkpoint_path = (dir / "best.ckpt").string();
      opts.final_checkpoint_path = (dir / "final.ckpt").string();
      opts.on_epoch = [&](const EpochLog& row) {
        if (row.epoch % 10 == 0 || row.epoch + 1 == tr_cfg.epochs)
          err << "epoch " << row.epoch << " recon " << fmt(row.train_recon, "%.5f") << " kl "
              << fmt(row.train_kl, "%.4f") << " test " << fmt(row.test_recon, "%.5f") << '\n';
      };
      const TrainResult res = train(model, train_set, test_set, tr_cfg, opts);
      out << "epochs " << res.log.size() << "\nfinal_test_recon " << fmt(res.log.empty() ? 0.0 : res.log.back().test_recon)
          << "\nbest_epoch " << (res.best_model.epoch == 0 ? 0 : res.best_model.epoch - 1) << '\n';
      finish(tr,
             {"train",
              {{"seed", tr_cfg.seed}},
              {{"hand", tr_hand.urdf}, {"train", tr_train}, {"test", tr_test}},
              {{"best", opts.best_checkpoint_path}, {"final", opts.final_checkpoint_path}, {"log", (dir / "train_log.csv").string()}}},
             dir / "manifest.json");
    };
  });

  // ---------------------------------------------------------------- eval
  HandArgs ev_hand;
  std::string ev_ckpt, ev_data, ev_out;
  EvalOptions ev_opts;
  bool ev_gnuplot = false;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  ev_hand.add(ev);
  ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Evaluation dataset")->required()->check(CLI::ExistingFile);
  ev->add_option("--out-dir", ev_out, "Directory for report.csv, summary.csv and the manifest")->required();
  ev->add_option("--samples", ev_opts.samples, "Latent samples per record for the lowest-error metrics")
      ->check(CLI::PositiveNumber);
  ev->add_option("--timing-batch", ev_opts.timing_batch, "Batch size of the timing pass (0: skip)");
  ev->add_option("--displacement-budget", ev_opts.displacement_budget,
                 "Random configurations added to the corner search for keypoint normalizers");
  ev->add_flag("--gnuplot", ev_gnuplot, "Also write joint histogram data and a gnuplot script");
  add_seed(ev, ev_opts.seed);
  add_jobs(ev, ev_opts.jobs);
  common(ev);
  ev->callback([&] {
    action = [&] {
      if (dry(ev)) return;
      const HandModel model = ev_hand.load();
      const CvaeModel net = from_checkpoint(ad::load_checkpoint(ev_ckpt));
      const Dataset data = load_dataset(ev_data);
      check_compatible(net, data);
      if (net.hand_name != model.name)
        throw ValidationError("hand mismatch: checkpoint was trained on '" + net.hand_name + "', --hand is '" +
                              model.name + "'");
      EvalOptions opts = ev_opts;
      opts.jobs = resolve_jobs(opts.jobs);
      const EvalResult res = evaluate(model, data, cvae_predictor(net), opts);
      for (std::size_t l : res.normalizers.immobile_links)
        err << "warning: keypoint of link '" << model.links[l].name
            << "' cannot move; left out of cartesian percentages\n";
      const fs::path dir(ev_out);
      write_text(dir / "report.csv", report_csv(res));
      const std::string summary = summary_csv(res);
      write_text(dir / "summary.csv", summary);
      json outputs = {{"report", (dir / "report.csv").string()}, {"summary", (dir / "summary.csv").string()}};
      if (ev_gnuplot) outputs["gnuplot"] = write_gnuplot((dir / "plots").string(), model, data, res);
      out << summary;
      finish(ev, {"eval", {{"seed", ev_opts.seed}}, {{"checkpoint", ev_ckpt}, {"data", ev_data}, {"hand", ev_hand.urdf}}, outputs},
             dir / "manifest.json");
    };
  });

  // ---------------------------------------------------------------- infer
  HandArgs inf_hand;
  std::string inf_ckpt, inf_data;
  std::size_t inf_record = 0, inf_samples = 1;
  std::uint64_t inf_seed = 0;
  bool inf_normalized = false;
  auto* inf = app.add_subcommand("infer", "Predict joint configurations for a dataset record's cloud");
  inf_hand.add(inf);
  inf->add_option("--checkpoint", inf_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  inf->add_option("--data", inf_data, "Dataset holding the input cloud")->required()->check(CLI::ExistingFile);
  inf->add_option("--record", inf_record, "Record index");
  inf->add_option("--samples", inf_samples, "Latent samples; sample 0 is the prior mean")->check(CLI::PositiveNumber);
  inf->add_flag("--normalized", inf_normalized, "Print normalized [0, 1] values instead of radians");
  add_seed(inf, inf_seed);
  common(inf);
  inf->callback([&] {
    action = [&] {
      if (dry(inf)) return;
      const HandModel model = inf_hand.load();
      const CvaeModel net = from_checkpoint(ad::load_checkpoint(inf_ckpt));
      const Dataset data = load_dataset(inf_data);
      check_compatible(net, data);
      if (inf_record >= data.records.size())
        throw ValidationError("record " + std::to_string(inf_record) + " out of range (dataset has " +
                              std::to_string(data.records.size()) + ")");
      const auto preds = infer(net, data.records[inf_record].cloud, inf_samples, inf_seed);
      for (const JointConfig& q : preds) {
        const auto values = inf_normalized ? q.normalized() : q.radians(model);
        for (std::size_t j = 0; j < values.size(); ++j) out << (j ? "," : "") << fmt(values[j]);
        out << '\n';
      }
      if (!manifest_override.empty())
        finish(inf, {"infer", {{"seed", inf_seed}}, {{"checkpoint", inf_ckpt}, {"data", inf_data}}, {}}, {});
    };
  });

  // ---------------------------------------------------------------- replay
  std::string replay_path;
  auto* rp = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rp->add_option("manifest", replay_path, "Manifest JSON")->required()->check(CLI::ExistingFile);
  rp->callback([&] {
    action = [&] {
      const json m = json::parse(read_text(replay_path));
      const auto argv = m.at("argv").get<std::vector<std::string>>();
      if (!argv.empty() && argv[0] == "replay") throw ValidationError("refusing to replay a replay");
      const int code = run(argv, out, err);
      if (code != 0) throw Error("replayed command exited with code " + std::to_string(code));
    };
  });

  try {
    const std::vector<std::string> full = splice_config_file(args, app);
    std::vector<std::string> reversed(full.rbegin(), full.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (action) action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace gripcvae::cli
