#include "exitrack/cli/commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "exitrack/data/generator.hpp"
#include "exitrack/evaluation/metrics.hpp"
#include "exitrack/evaluation/pareto.hpp"
#include "exitrack/inference/calibrate.hpp"
#include "exitrack/numerics/errors.hpp"
#include "exitrack/numerics/text.hpp"

#ifndef EXITRACK_VERSION
#define EXITRACK_VERSION "unknown"
#endif

namespace exitrack::cli {

namespace fs = std::filesystem;

namespace {

const char* const kSplits[] = {"train", "val", "test"};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed while writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_exists(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw IoError(what + " not found: " + path.string());
}

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::size_t jobs = 1;
};

RunConfig effective_config(const Globals& g) {
  RunConfig c = g.config.empty() ? RunConfig{} : RunConfig::load(g.config);
  if (g.seed) c.seed = *g.seed;
  c.validate();
  return c;
}

// One manifest per artifact directory; rerunning a command replaces it.
struct Manifest {
  std::string command;
  std::vector<std::string> args;
  std::string started;
  std::vector<std::string> outputs;

  void write(const fs::path& dir, const RunConfig* config) const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["command_line"] = args;
    j["code_version"] = EXITRACK_VERSION;
    if (config) {
      j["seed"] = config->seed;
      j["config"] = config->to_ini();
    }
    j["started"] = started;
    j["finished"] = utc_now();
    j["outputs"] = outputs;
    write_text(dir / "manifest.json", j.dump(2) + "\n");
  }
};

std::vector<data::Sequence> load_split(const fs::path& root, const std::string& split) {
  require_exists(root / split, "dataset split");
  return data::read_split(root / split);
}

inference::ExitPolicy adaptive_from(const RunConfig& config, const std::string& tau) {
  const auto exits = config.model.backbone.exits();
  if (!tau.empty()) return inference::parse_policy("adaptive:" + tau, exits);
  return inference::ExitPolicy::adaptive(config.infer.thresholds);
}

// Thresholds of the row labelled `label` in a calibration CSV.
std::vector<double> thresholds_from_calibration(const fs::path& path, const std::string& label, std::size_t exits) {
  std::istringstream in(read_text(path));
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.empty()) continue;
    std::vector<std::string> roles;
    std::stringstream labels(cells.back());
    for (std::string role; std::getline(labels, role, '+');) roles.push_back(role);
    if (std::find(roles.begin(), roles.end(), label) == roles.end()) continue;
    std::vector<double> tau;
    for (std::size_t k = 0; k + 1 < exits; ++k) {
      try {
        tau.push_back(num::parse_numbers(cells.at(k), "threshold").at(0));
      } catch (const std::exception& e) {
        throw ParseError("calibration file " + path.string() + ": " + e.what(), number);
      }
    }
    return tau;
  }
  throw ParseError("calibration file " + path.string() + " has no row labelled '" + label + "'", number);
}

// Run labels end up in CSV cells; threshold lists use '/' instead of ','.
std::string csv_label(std::string text) {
  std::replace(text.begin(), text.end(), ',', '/');
  return text;
}

void prepare_out(const fs::path& out) { fs::create_directories(out); }

int cmd_gen_data(const Globals& g, bool force, Manifest& m) {
  const auto config = effective_config(g);
  const fs::path out = g.out;
  if (fs::exists(out) && !fs::is_directory(out)) throw IoError(out.string() + " exists and is not a directory");
  if (fs::exists(out) && !fs::is_empty(out)) {
    if (!force) throw IoError("refusing to write into non-empty directory " + out.string() + " (use --force)");
    for (const auto& entry : fs::directory_iterator(out)) fs::remove_all(entry.path());
  }
  prepare_out(out);
  generate_dataset(config, out);
  for (const auto* split : kSplits) m.outputs.push_back((out / split).string());
  m.write(out, &config);
  return 0;
}

int cmd_train(const Globals& g, const std::string& data_dir, const std::string& stage1, Manifest& m) {
  const auto config = effective_config(g);
  const fs::path out = g.out;
  const auto train = load_split(data_dir, "train");
  if (train.empty()) throw IoError("training split of " + data_dir + " has no sequences");
  auto val_seqs = load_split(data_dir, "val");
  if (val_seqs.empty()) val_seqs = train;
  const auto tc = train_config(config);
  const auto val = objectives::make_validation(val_seqs, tc, config.seed + 1);
  prepare_out(out);

  inference::Model model(config.model, config.seed);
  objectives::TrainLog log;
  if (stage1.empty()) {
    objectives::train_stage1(model, train, val, tc, log);
    objectives::make_checkpoint(model, nullptr, config.to_ini()).save(out / "stage1.ckpt");
    m.outputs.push_back((out / "stage1.ckpt").string());
  } else {
    require_exists(stage1, "stage-1 checkpoint");
    objectives::load_stage1(num::Checkpoint::load(stage1), model);
  }
  auto imitation = objectives::make_imitation(model);
  objectives::train_stage2(model, imitation, train, val, tc, log);
  objectives::make_checkpoint(model, &imitation, config.to_ini()).save(out / "model.ckpt");
  log.write_csv(out / "train_log.csv");
  m.outputs.push_back((out / "model.ckpt").string());
  m.outputs.push_back((out / "train_log.csv").string());
  m.write(out, &config);
  return 0;
}

int cmd_calibrate(const Globals& g, const std::string& ckpt, const std::string& data_dir, std::ostream& os,
                  Manifest& m) {
  require_exists(ckpt, "checkpoint");
  auto loaded = load_checkpoint(ckpt);
  if (!g.config.empty() || g.seed) loaded.config = effective_config(g);
  const auto val = load_split(data_dir, "val");
  if (val.empty()) throw ContractError("calibrate: validation split of " + data_dir + " is empty");
  inference::CalibrationConfig cc;
  cc.grid_points = loaded.config.infer.grid_points;
  cc.refine_step = loaded.config.infer.refine_step;
  cc.jobs = g.jobs;
  const auto rows = inference::calibrate(loaded.model, val, track_options(loaded.config), cc);
  const fs::path out = g.out;
  prepare_out(out);
  write_text(out / "calibration.csv", inference::calibration_csv(rows));
  for (const auto& r : rows)
    if (!r.label.empty())
      os << r.label << ": tau=" << num::format_list(r.thresholds) << " iou=" << num::format_number(r.mean_iou)
         << " mflops=" << num::format_number(r.mean_flops / 1e6) << '\n';
  m.outputs.push_back((out / "calibration.csv").string());
  m.write(out, &loaded.config);
  return 0;
}

int cmd_track(const Globals& g, const std::string& ckpt, const std::string& seq_dir, const std::string& policy_text,
              const std::string& tau, Manifest& m) {
  require_exists(ckpt, "checkpoint");
  require_exists(seq_dir, "sequence");
  auto loaded = load_checkpoint(ckpt);
  const auto exits = loaded.model.exits();
  const auto policy = policy_text == "adaptive" ? adaptive_from(loaded.config, tau)
                                                : inference::parse_policy(policy_text, exits);
  const auto seq = data::read_sequence(seq_dir);
  const auto result = inference::track_sequence(seq, loaded.model, policy, track_options(loaded.config));
  const fs::path out = g.out;
  prepare_out(out);
  write_text(out / "track.csv", evaluation::track_csv(result));
  m.outputs.push_back((out / "track.csv").string());
  m.write(out, &loaded.config);
  return 0;
}

struct NamedRun {
  std::string name;
  std::vector<inference::TrackResult> results;
};

void write_eval_outputs(const fs::path& out, const RunConfig& config, std::size_t exits,
                        const std::vector<NamedRun>& runs, Manifest& m) {
  const double threshold = config.infer.precision_threshold > 0
                               ? config.infer.precision_threshold
                               : evaluation::precision_threshold(static_cast<double>(config.data.frame_size));
  std::vector<std::pair<std::string, evaluation::MetricReport>> reports;
  std::vector<evaluation::TradeoffPoint> points;
  std::string frames;
  for (const auto& run : runs) {
    const auto report = evaluation::metric_report(run.results, exits, threshold);
    reports.emplace_back(run.name, report);
    if (report.latency_ms > 0) points.push_back({1000.0 / report.latency_ms, report.auc, run.name});
  }
  write_text(out / "metrics.csv", evaluation::metric_report_csv(reports));
  write_text(out / "points.csv", evaluation::points_csv(points));
  m.outputs.push_back((out / "metrics.csv").string());
  m.outputs.push_back((out / "points.csv").string());
  for (const auto& run : runs) {
    std::string safe = run.name;
    for (auto& ch : safe)
      if (ch == ':' || ch == ',' || ch == '/') ch = '_';
    write_text(out / ("frames_" + safe + ".csv"), evaluation::frames_csv(run.results));
    write_text(out / ("exit_depth_" + safe + ".csv"),
               evaluation::exit_depth_csv(evaluation::exit_depth_report(run.results)));
    m.outputs.push_back((out / ("frames_" + safe + ".csv")).string());
    m.outputs.push_back((out / ("exit_depth_" + safe + ".csv")).string());
  }
  std::vector<std::pair<std::string, std::vector<inference::TrackResult>>> fixed;
  for (const auto& run : runs)
    if (run.name.rfind("fixed:", 0) == 0) fixed.emplace_back(run.name, run.results);
  if (!fixed.empty()) {
    const auto report = evaluation::difficulty_report(fixed, config.data.levels);
    write_text(out / "difficulty.csv", evaluation::difficulty_csv(report));
    m.outputs.push_back((out / "difficulty.csv").string());
  }
}

std::vector<NamedRun> evaluate_policies(const inference::Model& model, const RunConfig& config,
                                        const std::vector<data::Sequence>& test, const std::string& policy_text,
                                        const std::string& tau, const std::string& calibration, std::size_t jobs) {
  const auto exits = model.exits();
  const auto options = track_options(config);
  auto adaptive = [&] {
    if (!calibration.empty()) return inference::ExitPolicy::adaptive(thresholds_from_calibration(calibration, "medi", exits));
    return adaptive_from(config, tau);
  };
  std::vector<NamedRun> runs;
  auto run = [&](const inference::ExitPolicy& p, std::string name = {}) {
    if (name.empty()) name = csv_label(p.describe());
    runs.push_back({std::move(name), inference::track_all(test, model, p, options, jobs)});
    return runs.back().results;
  };
  if (policy_text == "all") {
    for (std::size_t k = 1; k <= exits; ++k) run(inference::ExitPolicy::fixed(k));
    const auto a = run(adaptive());
    run(inference::match_cost_random_policy(a, exits), "random-matched");
  } else if (policy_text == "adaptive") {
    run(adaptive());
  } else if (policy_text == "random") {
    const auto a = inference::track_all(test, model, adaptive(), options, jobs);
    run(inference::match_cost_random_policy(a, exits), "random-matched");
  } else {
    run(inference::parse_policy(policy_text, exits));
  }
  return runs;
}

struct Variant {
  std::string name;
  RunConfig config;
};

std::vector<Variant> ablation_variants(const RunConfig& base, const std::string& which) {
  std::vector<Variant> out;
  auto add = [&](std::string name, auto&& edit) {
    RunConfig c = base;
    edit(c);
    c.validate();
    out.push_back({std::move(name), std::move(c)});
  };
  if (which == "reuse") {
    for (auto mode : {exits::ReuseMode::none, exits::ReuseMode::residual, exits::ReuseMode::input_sum,
                      exits::ReuseMode::gated_sum})
      add("reuse=" + exits::to_string(mode), [mode](RunConfig& c) { c.model.reuse = mode; });
  } else if (which == "distill") {
    for (auto mode : {distill::DistillMode::on, distill::DistillMode::off, distill::DistillMode::plain})
      add("distill=" + distill::to_string(mode), [mode](RunConfig& c) { c.train.distill = mode; });
  } else if (which == "strategy") {
    for (auto s : {objectives::Strategy::joint, objectives::Strategy::fixed_backbone, objectives::Strategy::one_by_one})
      add("strategy=" + objectives::to_string(s), [s](RunConfig& c) { c.train.strategy = s; });
  } else {
    throw ConfigError("unknown ablation '" + which + "' (expected reuse|distill|strategy)");
  }
  return out;
}

int cmd_eval(const Globals& g, const std::string& ckpt, const std::string& data_dir, const std::string& policy_text,
             const std::string& tau, const std::string& calibration, const std::string& ablate,
             const std::string& stage1, Manifest& m) {
  const fs::path out = g.out;
  const auto test = load_split(data_dir, "test");
  if (test.empty()) throw IoError("test split of " + data_dir + " has no sequences");
  if (!calibration.empty()) require_exists(calibration, "calibration file");
  if (ablate.empty()) {
    require_exists(ckpt, "checkpoint");
    auto loaded = load_checkpoint(ckpt);
    const auto runs = evaluate_policies(loaded.model, loaded.config, test, policy_text, tau, calibration, g.jobs);
    prepare_out(out);
    write_eval_outputs(out, loaded.config, loaded.model.exits(), runs, m);
    m.write(out, &loaded.config);
    return 0;
  }
  // Ablations retrain stage 2 for every preset from one shared stage-1 checkpoint.
  const fs::path s1 = !stage1.empty() ? fs::path(stage1) : fs::path(ckpt).parent_path() / "stage1.ckpt";
  require_exists(s1, "stage-1 checkpoint");
  const auto base = stage1.empty() && !ckpt.empty() ? load_checkpoint(ckpt).config : load_checkpoint(s1).config;
  RunConfig config = base;
  if (!g.config.empty() || g.seed) config = effective_config(g);
  const auto train = load_split(data_dir, "train");
  auto val_seqs = load_split(data_dir, "val");
  if (val_seqs.empty()) val_seqs = train;
  const auto stage1_ckpt = num::Checkpoint::load(s1);
  prepare_out(out);
  std::ostringstream table;
  table << "variant,policy,mean_iou,auc,precision,mean_flops\n";
  const double threshold = config.infer.precision_threshold > 0
                               ? config.infer.precision_threshold
                               : evaluation::precision_threshold(static_cast<double>(config.data.frame_size));
  for (const auto& v : ablation_variants(config, ablate)) {
    const auto tc = train_config(v.config);
    const auto val = objectives::make_validation(val_seqs, tc, v.config.seed + 1);
    inference::Model model(v.config.model, v.config.seed);
    objectives::load_stage1(stage1_ckpt, model);
    auto imitation = objectives::make_imitation(model);
    objectives::TrainLog log;
    objectives::train_stage2(model, imitation, train, val, tc, log);
    std::string safe = v.name;
    for (auto& ch : safe)
      if (ch == '=') ch = '_';
    log.write_csv(out / ("train_log_" + safe + ".csv"));
    m.outputs.push_back((out / ("train_log_" + safe + ".csv")).string());
    for (std::size_t k = 1; k <= model.exits(); ++k) {
      const auto results =
          inference::track_all(test, model, inference::ExitPolicy::fixed(k), track_options(v.config), g.jobs);
      const auto r = evaluation::metric_report(results, model.exits(), threshold);
      table << v.name << ",fixed:" << k << ',' << num::format_number(r.mean_iou) << ',' << num::format_number(r.auc)
            << ',' << num::format_number(r.precision) << ',' << num::format_number(r.mean_flops) << '\n';
    }
  }
  write_text(out / ("ablation_" + ablate + ".csv"), table.str());
  m.outputs.push_back((out / ("ablation_" + ablate + ".csv")).string());
  m.write(out, &config);
  return 0;
}

int cmd_pareto(const Globals& g, const std::string& in, bool svg, Manifest& m) {
  require_exists(in, "points file");
  const auto points = evaluation::read_points_csv(in);
  if (points.empty()) throw ContractError("pareto: " + in + " has no points");
  const auto front = evaluation::pareto_front(points);
  const fs::path out = g.out;
  prepare_out(out);
  write_text(out / "front.csv", evaluation::points_csv(front));
  m.outputs.push_back((out / "front.csv").string());
  if (svg) {
    write_text(out / "front.svg", evaluation::scatter_svg(points, front));
    m.outputs.push_back((out / "front.svg").string());
  }
  m.write(out, nullptr);
  return 0;
}

}  // namespace

void generate_dataset(const RunConfig& config, const fs::path& root) {
  const std::size_t counts[] = {config.data.train_per_level, config.data.val_per_level, config.data.test_per_level};
  for (int split = 0; split < 3; ++split) {
    fs::create_directories(root / kSplits[split]);
    for (int level = 0; level < config.data.levels; ++level)
      for (std::size_t i = 0; i < counts[split]; ++i) {
        auto gen = data::difficulty_preset(level, config.data.length);
        gen.frame_size = config.data.frame_size;
        num::RandomState rng(sequence_seed(config.seed, split, level, i));
        auto seq = data::generate_sequence(gen, rng);
        std::ostringstream name;
        name << 'L' << level << '-' << std::setw(4) << std::setfill('0') << i;
        seq.name = name.str();
        data::write_sequence(seq, root / kSplits[split] / seq.name);
      }
  }
}

LoadedModel load_checkpoint(const fs::path& path) {
  auto ckpt = num::Checkpoint::load(path);
  LoadedModel loaded{RunConfig::parse(ckpt.metadata, path.string() + " (embedded config)"), {}};
  loaded.model = inference::Model(loaded.config.model, loaded.config.seed);
  objectives::load_model(ckpt, loaded.model);
  return loaded;
}

inference::TrackOptions track_options(const RunConfig& config) {
  inference::TrackOptions o;
  o.crop.template_size = config.model.backbone.template_size;
  o.crop.search_size = config.model.backbone.search_size;
  o.crop.template_factor = config.data.template_factor;
  o.crop.search_factor = config.data.search_factor;
  o.seed = config.seed;
  return o;
}

objectives::TrainConfig train_config(const RunConfig& config) {
  auto tc = config.train;
  tc.seed = config.seed;
  tc.crop.template_size = config.model.backbone.template_size;
  tc.crop.search_size = config.model.backbone.search_size;
  tc.crop.template_factor = config.data.template_factor;
  tc.crop.search_factor = config.data.search_factor;
  return tc;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Early-exit transformer tracking on a synthetic benchmark", "exitrack"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "INI configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed (overrides the config)");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--jobs", g.jobs, "Worker threads for tracking")->check(CLI::PositiveNumber);
  app.set_version_flag("--version", EXITRACK_VERSION);

  bool force = false;
  auto* gen = app.add_subcommand("gen-data", "Generate train/val/test splits over the difficulty levels");
  gen->add_flag("--force", force, "Overwrite a non-empty output directory");

  std::string data_dir, stage1, ckpt, seq_dir, policy = "adaptive", tau, calibration, ablate, points;
  auto* train = app.add_subcommand("train", "Two-stage training; writes stage1.ckpt, model.ckpt and train_log.csv");
  train->add_option("--data", data_dir, "Dataset root from gen-data")->required();
  train->add_option("--stage1", stage1, "Start stage 2 from this stage-1 checkpoint");

  auto* cal = app.add_subcommand("calibrate", "Sweep exit thresholds on the validation split");
  cal->add_option("--ckpt", ckpt, "Model checkpoint")->required();
  cal->add_option("--data", data_dir, "Dataset root from gen-data")->required();

  auto* track = app.add_subcommand("track", "Track one sequence; writes track.csv");
  track->add_option("--ckpt", ckpt, "Model checkpoint")->required();
  track->add_option("--seq", seq_dir, "Sequence directory")->required();
  track->add_option("--policy", policy, "fixed:k | adaptive | random:p1,...,pK");
  track->add_option("--tau", tau, "Adaptive thresholds t1,...,t(K-1)");

  bool no_svg = false;
  auto* eval = app.add_subcommand("eval", "Evaluate exit policies or ablation presets on the test split");
  eval->add_option("--ckpt", ckpt, "Model checkpoint");
  eval->add_option("--data", data_dir, "Dataset root from gen-data")->required();
  eval->add_option("--policy", policy, "fixed:k | adaptive | random[:p1,...,pK] | all");
  eval->add_option("--tau", tau, "Adaptive thresholds t1,...,t(K-1)");
  eval->add_option("--calibration", calibration, "Use the 'medi' row of this calibration.csv for adaptive");
  eval->add_option("--ablate", ablate, "Retrain stage 2 per preset: reuse | distill | strategy");
  eval->add_option("--stage1", stage1, "Stage-1 checkpoint for --ablate (default: next to --ckpt)");

  auto* pareto = app.add_subcommand("pareto", "Pareto front of speed/precision points");
  pareto->add_option("--in", points, "CSV with label,speed,precision")->required();
  pareto->add_flag("--no-svg", no_svg, "Skip the scatter plot");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  Manifest m;
  m.args = args;
  m.started = utc_now();
  try {
    if (*gen) return m.command = "gen-data", cmd_gen_data(g, force, m);
    if (*train) return m.command = "train", cmd_train(g, data_dir, stage1, m);
    if (*cal) return m.command = "calibrate", cmd_calibrate(g, ckpt, data_dir, out, m);
    if (*track) return m.command = "track", cmd_track(g, ckpt, seq_dir, policy, tau, m);
    if (*eval) {
      if (ckpt.empty() && (ablate.empty() || stage1.empty()))
        throw ConfigError("eval needs --ckpt (or --ablate with --stage1)");
      return m.command = "eval", cmd_eval(g, ckpt, data_dir, policy, tau, calibration, ablate, stage1, m);
    }
    if (*pareto) return m.command = "pareto", cmd_pareto(g, points, !no_svg, m);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace exitrack::cli
