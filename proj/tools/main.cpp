// Command-line front end: single trials, batch benchmarks, and filter-only
// replays of recorded trajectories.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mergeplan/mergeplan.hpp"

namespace {

namespace fs = std::filesystem;
using namespace mergeplan;

ScenarioConfig load_or_default(const std::string& path) {
  if (path.empty()) {
    ScenarioConfig cfg;
    validate_config(cfg);
    return cfg;
  }
  return load_config(path);
}

// --out beats MERGEPLAN_OUT beats ./out.
fs::path resolve_out_dir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("MERGEPLAN_OUT"); env != nullptr && env[0] != '\0') {
    return env;
  }
  return "out";
}

std::vector<Strategy> parse_strategies(const std::string& csv) {
  std::vector<Strategy> out;
  std::size_t begin = 0;
  while (begin <= csv.size()) {
    const std::size_t end = csv.find(',', begin);
    const std::string item =
        csv.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
    if (!item.empty()) out.push_back(Strategy::parse(item));
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  if (out.empty()) throw InvalidInput("no strategies given");
  return out;
}

int cmd_run(const std::string& config_path, const std::string& strategy_name, double true_c,
            std::uint64_t seed, const std::string& out_flag) {
  const ScenarioConfig cfg = load_or_default(config_path);
  if (true_c < 0.0 || true_c > 1.0) throw ConfigError("--true-c must lie in [0, 1]");
  const Strategy strategy = Strategy::parse(strategy_name);

  const TrialRecord rec = run_trial(cfg, strategy, true_c, seed);

  const fs::path out_dir = resolve_out_dir(out_flag);
  fs::create_directories(out_dir);
  write_text_file((out_dir / "trial.json").string(), trial_to_json(rec).dump(2) + "\n");
  if (!rec.belief_trace.empty()) {
    write_text_file((out_dir / "trace.csv").string(), filter_trace_csv(rec.belief_trace));
  }

  std::printf("strategy=%s true_c=%.2f seed=%llu outcome=%s duration=%.1fs", rec.strategy.c_str(),
              rec.true_c, static_cast<unsigned long long>(rec.seed), to_string(rec.outcome),
              rec.duration);
  if (rec.merged()) std::printf(" time_to_merge=%.1fs", rec.time_to_merge);
  std::printf(" min_ttc=%.2fs hard_brake=%s\n", rec.min_ttc, rec.hard_brake ? "yes" : "no");
  std::printf("wrote %s\n", (out_dir / "trial.json").string().c_str());
  return 0;
}

int cmd_bench(const std::string& config_path, int n_per_cell, std::uint64_t seed,
              const std::string& out_flag, int parallel, const std::string& strategies_csv,
              bool skip_records) {
  const ScenarioConfig cfg = load_or_default(config_path);

  BatchSpec spec;
  spec.strategies = parse_strategies(strategies_csv);
  spec.trials_per_cell = n_per_cell;
  spec.master_seed = seed;
  spec.workers = parallel;

  const BatchResult result = run_batch(cfg, spec);

  const fs::path out_dir = resolve_out_dir(out_flag);
  fs::create_directories(out_dir);
  const std::string csv = summary_csv(result.cells);
  write_text_file((out_dir / "summary.csv").string(), csv);
  if (!skip_records) {
    write_trials_jsonl((out_dir / "trials.jsonl").string(), result.trials);
  }

  std::fputs(csv.c_str(), stdout);
  std::printf("wrote %s\n", (out_dir / "summary.csv").string().c_str());
  return 0;
}

int cmd_trace_filter(const std::string& config_path, const std::string& records_path, int index,
                     std::optional<std::uint64_t> seed_override, const std::string& out_flag) {
  const ScenarioConfig cfg = load_or_default(config_path);

  std::ifstream in(records_path);
  if (!in) throw ConfigError("cannot open records file: " + records_path);
  std::string line;
  nlohmann::json rec;
  int row = 0;
  bool found = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (row == index) {
      rec = nlohmann::json::parse(line);
      found = true;
      break;
    }
    ++row;
  }
  if (!found) throw ConfigError("records file has no trial at index " + std::to_string(index));

  const auto& init = rec.at("initial");
  SceneObservables scene;
  scene.ego = EgoState{init.at("ego").at("s").get<double>(), init.at("ego").at("v").get<double>(),
                       init.at("ego").at("vdot").get<double>()};
  scene.trailing =
      VehicleState{init.at("trailing").at("x").get<double>(), cfg.geometry.main_lane_y,
                   init.at("trailing").at("v").get<double>(), 0.0, 0.0};
  scene.lead = VehicleState{init.at("lead").at("x").get<double>(), cfg.geometry.main_lane_y,
                            init.at("lead").at("v").get<double>(), 0.0, 0.0};

  const std::uint64_t trial_seed = rec.at("seed").get<std::uint64_t>();
  const std::uint64_t filter_seed =
      seed_override ? *seed_override : derive_seed(trial_seed, {3});

  const MergePomdp pomdp = make_pomdp(cfg);
  ParticleFilter filter(pomdp, scene, cfg.filter, filter_seed);

  std::vector<BeliefTracePoint> trace;
  trace.push_back(BeliefTracePoint{0.0, filter.summary()});
  double t = 0.0;
  for (const auto& step : rec.at("steps")) {
    const std::string mode = step.at("mode").get<std::string>();
    const double value = step.at("value").get<double>();
    const EgoCommand cmd =
        mode == "jerk" ? EgoCommand::jerk(value) : EgoCommand::direct_accel(value);
    const Observation obs{step.at("obs_x").get<double>(), step.at("obs_v").get<double>()};
    const BeliefSummary summary = filter.step(cmd, obs, cfg.dt);
    t += cfg.dt;
    trace.push_back(BeliefTracePoint{t, summary});
  }

  const fs::path out_dir = resolve_out_dir(out_flag);
  fs::create_directories(out_dir);
  const fs::path out_path = out_dir / "trace.csv";
  write_text_file(out_path.string(), filter_trace_csv(trace));
  std::printf("replayed %zu steps, wrote %s\n", trace.size() - 1, out_path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"freeway-merge planning toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string strategy_name = "learned_c";
  std::string strategies_csv = "learned_c,fixed_c0,fixed_c1,sidm";
  std::string records_path;
  double true_c = 0.0;
  std::uint64_t seed = 1;
  int n_per_cell = 100;
  int parallel = 1;
  int index = 0;
  bool skip_records = false;
  std::uint64_t seed_override_value = 0;

  CLI::App* run = app.add_subcommand("run", "run a single closed-loop trial");
  run->add_option("--config", config_path, "config JSON path (defaults used when omitted)");
  run->add_option("--strategy", strategy_name, "learned_c | fixed_c0 | fixed_c1 | sidm");
  run->add_option("--true-c", true_c, "ground-truth cooperation level in [0, 1]");
  run->add_option("--seed", seed, "trial seed");
  run->add_option("--out", out_dir, "output directory (or MERGEPLAN_OUT)");

  CLI::App* bench = app.add_subcommand("bench", "run the strategy x cooperation benchmark grid");
  bench->add_option("--config", config_path, "config JSON path (defaults used when omitted)");
  bench->add_option("--n-per-cell", n_per_cell, "trials per (strategy, true_c) cell");
  bench->add_option("--seed", seed, "master seed");
  bench->add_option("--out", out_dir, "output directory (or MERGEPLAN_OUT)");
  bench->add_option("--parallel", parallel, "worker threads");
  bench->add_option("--strategies", strategies_csv, "comma-separated strategy list");
  bench->add_flag("--no-records", skip_records, "skip writing per-trial JSONL records");

  CLI::App* trace = app.add_subcommand("trace-filter", "replay the filter over a recorded trial");
  trace->add_option("--config", config_path, "config JSON path (defaults used when omitted)");
  trace->add_option("--records", records_path, "trials.jsonl produced by bench or run")
      ->required();
  trace->add_option("--index", index, "trial row in the records file");
  CLI::Option* seed_opt =
      trace->add_option("--seed", seed_override_value, "filter seed (default: recorded)");
  trace->add_option("--out", out_dir, "output directory (or MERGEPLAN_OUT)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, strategy_name, true_c, seed, out_dir);
    if (bench->parsed()) {
      return cmd_bench(config_path, n_per_cell, seed, out_dir, parallel, strategies_csv,
                       skip_records);
    }
    if (trace->parsed()) {
      std::optional<std::uint64_t> seed_override;
      if (seed_opt->count() > 0) seed_override = seed_override_value;
      return cmd_trace_filter(config_path, records_path, index, seed_override, out_dir);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
