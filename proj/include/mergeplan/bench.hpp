#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "mergeplan/checks.hpp"
#include "mergeplan/config.hpp"
#include "mergeplan/core.hpp"
#include "mergeplan/errors.hpp"
#include "mergeplan/estimation.hpp"
#include "mergeplan/planner.hpp"
#include "mergeplan/pomdp.hpp"
#include "mergeplan/random.hpp"

namespace mergeplan {

inline MergePomdp make_pomdp(const ScenarioConfig& c) {
  return MergePomdp(c.geometry, c.main_idm, c.reward, c.noise, c.vehicle_length, c.ego_limits);
}

// Draws one conflict scenario. The trailing vehicle's merge time is sampled
// first and the ego is placed so the merge-time difference lands inside the
// configured window, so accepted draws are conflicts by construction;
// rejection only enforces the ego start window and initial clearance.
inline SceneState generate_scenario(const ScenarioConfig& cfg, double true_c, RngStream& rng) {
  const double ramp = cfg.geometry.ramp_length;
  for (int attempt = 0; attempt < 10000; ++attempt) {
    const double v_trailing = cfg.scenario.trailing_speed.sample(rng);
    const double distance = cfg.scenario.trailing_distance.sample(rng);
    const double merge_time_trailing = distance / v_trailing;
    const double delta = cfg.scenario.ttm_delta.sample(rng);
    const double v_ego = cfg.scenario.ego_speed.sample(rng);
    const double remaining = v_ego * (merge_time_trailing + delta);
    const double s0 = ramp - remaining;
    if (s0 < 0.0 || s0 >= ramp) continue;
    if (!cfg.scenario.ego_start_window.contains(s0)) continue;
    // Projection strictly ahead of the trailing bumper with a little slack.
    if (distance - remaining <= cfg.vehicle_length + 1.0) continue;

    SceneState s;
    s.ego = EgoState{s0, v_ego, cfg.scenario.ego_accel.sample(rng)};
    s.trailing = VehicleState{cfg.geometry.merge_point.x - distance, cfg.geometry.main_lane_y,
                              v_trailing, 0.0, 0.0};
    s.lead = VehicleState{s.trailing.x + cfg.scenario.lead_gap, cfg.geometry.main_lane_y,
                          v_trailing, 0.0, 0.0};
    s.c_T = true_c;
    MERGEPLAN_CHECK(std::abs(time_to_merge_ego(s.ego, cfg.geometry) -
                             time_to_merge_main(s.trailing, cfg.geometry)) <=
                        cfg.scenario.ttm_conflict_tolerance + 1e-9,
                    "generated scenario is not a merge conflict");
    return s;
  }
  throw ConfigError("generate_scenario: no admissible draw in 10000 attempts");
}

// Bumper-to-bumper time to collision between the trailing vehicle and the
// ego's main-lane projection. No reading (nullopt) while the gap is opening
// or the pair has fully passed each other; zero while they overlap.
inline std::optional<double> projection_ttc(const SceneState& s, const MergeGeometry& geom,
                                            double vehicle_length) {
  const double gap = ego_projection(s.ego, geom).x - s.trailing.x - vehicle_length;
  if (gap <= -vehicle_length) return std::nullopt;
  if (gap <= 0.0) return 0.0;
  const double closing = s.trailing.v - s.ego.v;
  if (closing <= 1e-9) return std::nullopt;
  return gap / closing;
}

struct StepRecord {
  double t = 0.0;          // time at the start of the step
  SceneState scene{};      // true scene at the start of the step
  EgoCommand command{};    // command actually applied (after the override)
  bool override_fired = false;
  Observation obs{};       // measurement taken after the step
  double reward = 0.0;
};

struct BeliefTracePoint {
  double t = 0.0;
  BeliefSummary belief{};
};

enum class TrialOutcome { kMergedClear, kTimeout };

inline const char* to_string(TrialOutcome o) {
  return o == TrialOutcome::kMergedClear ? "merged" : "timeout";
}

struct TrialRecord {
  std::string strategy;
  double true_c = 0.0;
  std::uint64_t seed = 0;
  TrialOutcome outcome = TrialOutcome::kTimeout;
  double duration = 0.0;                                      // [s]
  double time_to_merge = std::numeric_limits<double>::quiet_NaN();  // [s], NaN if never merged
  double min_ttc = 0.0;                                       // [s], capped
  bool hard_brake = false;
  int override_steps = 0;
  int degenerate_filter_steps = 0;
  std::vector<StepRecord> steps;
  std::vector<BeliefTracePoint> belief_trace;  // recorded for the learned strategy
  SceneState final_scene{};

  bool merged() const { return !std::isnan(time_to_merge); }
};

// Closed-loop execution of one merge encounter under a given ego strategy.
// Decision code never reads the true trailing state: it acts on the filter's
// posterior estimate, fed by noisy observations from the environment step.
class TrialRunner {
 public:
  TrialRunner(const ScenarioConfig& cfg, const Strategy& strategy, double true_c,
              std::uint64_t seed)
      : cfg_(cfg),
        strategy_(strategy),
        pomdp_(make_pomdp(cfg)),
        scenario_rng_(derive_seed(seed, {0})),
        env_rng_(derive_seed(seed, {1})),
        planner_rng_(derive_seed(seed, {2})) {
    scene_ = generate_scenario(cfg, true_c, scenario_rng_);
    // The state filter is shared perception infrastructure: every strategy
    // gets the same denoised trailing-vehicle estimate. Strategies differ
    // only in which cooperation value feeds the planner (posterior for the
    // learned strategy, a pinned constant for the fixed ones, none for the
    // car-following baseline).
    filter_.emplace(pomdp_, observables(scene_), cfg.filter, derive_seed(seed, {3}));
    if (strategy_.kind == Strategy::Kind::kLearned) {
      record_.belief_trace.push_back(BeliefTracePoint{0.0, filter_->summary()});
    }
    record_.strategy = strategy_.name();
    record_.true_c = true_c;
    record_.seed = seed;
  }

  const ScenarioConfig& config() const { return cfg_; }
  const MergePomdp& pomdp() const { return pomdp_; }
  SceneState& scene() { return scene_; }  // mutable so tests can probe isolation
  const std::optional<ParticleFilter>& filter() const { return filter_; }
  double t() const { return t_; }
  bool finished() const { return finished_; }

  // State estimate all decision code runs on: the ego's own state and the
  // lead are known; the trailing vehicle comes from the filter posterior
  // rather than a single raw reading, so threshold logic is not at the mercy
  // of per-step sensor noise.
  SceneObservables estimate() const {
    return SceneObservables{scene_.ego, filter_->mean_trailing(), scene_.lead};
  }

  // Strategy command for the current state estimate, before the safety
  // override. Advances the planner generator, so call it once per step.
  EgoCommand decide() {
    switch (strategy_.kind) {
      case Strategy::Kind::kLearned:
        return EgoCommand::jerk(plan_merge_action(pomdp_,
                                                  RootBelief::from_particles(filter_->particles()),
                                                  cfg_.planner, cfg_.dt, planner_rng_)
                                    .jerk);
      case Strategy::Kind::kFixed:
        return EgoCommand::jerk(plan_merge_action(pomdp_,
                                                  RootBelief::point(estimate(), strategy_.fixed_c),
                                                  cfg_.planner, cfg_.dt, planner_rng_)
                                    .jerk);
      case Strategy::Kind::kSidm:
        return EgoCommand::direct_accel(sidm_ego_step(estimate(), cfg_.ego_idm, cfg_.sigma_a,
                                                      cfg_.geometry, cfg_.vehicle_length,
                                                      cfg_.ego_limits, planner_rng_));
    }
    throw InvalidInput("TrialRunner: unhandled strategy");
  }

  // Applies a resolved command: advances the environment, feeds the filter
  // the new observation, and checks termination.
  void apply(const EgoCommand& cmd, bool override_fired = false) {
    if (finished_) throw InvalidInput("TrialRunner: trial already finished");

    StepRecord rec;
    rec.t = t_;
    rec.scene = scene_;
    rec.command = cmd;
    rec.override_fired = override_fired;

    const auto sample = pomdp_.env_step(scene_, cmd, cfg_.dt, env_rng_);
    scene_ = sample.next;
    t_ += cfg_.dt;
    rec.obs = sample.obs;
    rec.reward = sample.reward;

    const BeliefSummary summary = filter_->step(cmd, sample.obs, cfg_.dt);
    if (strategy_.kind == Strategy::Kind::kLearned) {
      record_.belief_trace.push_back(BeliefTracePoint{t_, summary});
    }

    if (override_fired) {
      record_.hard_brake = true;
      ++record_.override_steps;
    }
    if (!record_.merged() && scene_.ego.s >= cfg_.geometry.ramp_length) {
      record_.time_to_merge = t_;
    }
    record_.steps.push_back(rec);

    const bool cleared = record_.merged() && pomdp_.separation(scene_) > cfg_.reward.d_safety;
    if (cleared) {
      finished_ = true;
      record_.outcome = TrialOutcome::kMergedClear;
    } else if (t_ >= cfg_.t_max - 1e-9) {
      finished_ = true;
      record_.outcome = TrialOutcome::kTimeout;
    }
  }

  void step() {
    const OverrideDecision od =
        emergency_brake_override(pomdp_, estimate(), decide(), cfg_.safety.brake_decel);
    apply(od.command, od.fired);
  }

  TrialRecord run() {
    while (!finished_) step();
    finalize();
    return record_;
  }

 private:
  void finalize() {
    record_.duration = t_;
    record_.degenerate_filter_steps = filter_->degenerate_steps();
    double min_ttc = std::numeric_limits<double>::infinity();
    for (const StepRecord& rec : record_.steps) {
      if (const auto ttc = projection_ttc(rec.scene, cfg_.geometry, cfg_.vehicle_length)) {
        min_ttc = std::min(min_ttc, *ttc);
      }
    }
    if (const auto ttc = projection_ttc(scene_, cfg_.geometry, cfg_.vehicle_length)) {
      min_ttc = std::min(min_ttc, *ttc);
    }
    record_.min_ttc = std::min(min_ttc, cfg_.safety.ttc_cap);
    record_.final_scene = scene_;
  }

  ScenarioConfig cfg_;
  Strategy strategy_;
  MergePomdp pomdp_;
  RngStream scenario_rng_;
  RngStream env_rng_;
  RngStream planner_rng_;
  SceneState scene_{};
  std::optional<ParticleFilter> filter_;
  TrialRecord record_;
  double t_ = 0.0;
  bool finished_ = false;
};

inline TrialRecord run_trial(const ScenarioConfig& cfg, const Strategy& strategy, double true_c,
                             std::uint64_t seed) {
  return TrialRunner(cfg, strategy, true_c, seed).run();
}

// One (strategy, cooperation level) cell of the benchmark grid.
struct CellSummary {
  std::string strategy;
  double true_c = 0.0;
  int trials = 0;
  int merged = 0;
  int timeouts = 0;
  int hard_brakes = 0;
  double hard_brake_rate = 0.0;  // fraction of trials
  double time_to_merge_mean = std::numeric_limits<double>::quiet_NaN();
  double time_to_merge_median = std::numeric_limits<double>::quiet_NaN();
  double min_ttc_mean = 0.0;
  double min_ttc_median = 0.0;
};

struct BatchSpec {
  std::vector<Strategy> strategies;
  std::vector<double> cooperation_levels{0.0, 1.0};
  int trials_per_cell = 100;
  std::uint64_t master_seed = 1;
  int workers = 1;
};

struct BatchResult {
  std::vector<TrialRecord> trials;  // cell-major, trial-index minor
  std::vector<CellSummary> cells;
};

namespace detail {

inline double mean_of(const std::vector<double>& xs) {
  double sum = 0.0;
  for (double x : xs) sum += x;
  return xs.empty() ? std::numeric_limits<double>::quiet_NaN()
                    : sum / static_cast<double>(xs.size());
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace detail

// Runs the full grid. Trial seeds are a pure function of (master_seed,
// cooperation level, trial index), and aggregation order is fixed, so
// results do not depend on workers.
inline BatchResult run_batch(const ScenarioConfig& cfg, const BatchSpec& spec) {
  if (spec.strategies.empty()) throw InvalidInput("run_batch: no strategies");
  if (spec.cooperation_levels.empty()) throw InvalidInput("run_batch: no cooperation levels");
  if (spec.trials_per_cell <= 0) throw InvalidInput("run_batch: trials_per_cell must be positive");

  struct Job {
    Strategy strategy;
    double true_c = 0.0;
    std::uint64_t seed = 0;
  };
  // Seeds depend on the cooperation level and trial index but not on the
  // strategy: every strategy faces the same scenario draws and noise streams
  // (common random numbers), so cross-strategy metric comparisons are paired
  // rather than carrying independent scenario-sampling variance.
  std::vector<Job> jobs;
  for (const Strategy& strategy : spec.strategies) {
    std::uint64_t c_index = 0;
    for (double c : spec.cooperation_levels) {
      for (int trial = 0; trial < spec.trials_per_cell; ++trial) {
        jobs.push_back(Job{strategy, c,
                           derive_seed(spec.master_seed,
                                       {c_index, static_cast<std::uint64_t>(trial)})});
      }
      ++c_index;
    }
  }

  BatchResult result;
  result.trials.resize(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      result.trials[i] = run_trial(cfg, jobs[i].strategy, jobs[i].true_c, jobs[i].seed);
    }
  };
  const int workers = std::max(1, spec.workers);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  std::size_t offset = 0;
  for (const Strategy& strategy : spec.strategies) {
    for (double c : spec.cooperation_levels) {
      CellSummary cs;
      cs.strategy = strategy.name();
      cs.true_c = c;
      cs.trials = spec.trials_per_cell;
      std::vector<double> merge_times;
      std::vector<double> ttcs;
      for (int trial = 0; trial < spec.trials_per_cell; ++trial) {
        const TrialRecord& rec = result.trials[offset + static_cast<std::size_t>(trial)];
        if (rec.merged()) {
          ++cs.merged;
          merge_times.push_back(rec.time_to_merge);
        }
        if (rec.outcome == TrialOutcome::kTimeout) ++cs.timeouts;
        if (rec.hard_brake) ++cs.hard_brakes;
        ttcs.push_back(rec.min_ttc);
      }
      cs.hard_brake_rate = static_cast<double>(cs.hard_brakes) / cs.trials;
      cs.time_to_merge_mean = detail::mean_of(merge_times);
      cs.time_to_merge_median = detail::median_of(merge_times);
      cs.min_ttc_mean = detail::mean_of(ttcs);
      cs.min_ttc_median = detail::median_of(ttcs);
      result.cells.push_back(cs);
      offset += static_cast<std::size_t>(spec.trials_per_cell);
    }
  }
  return result;
}

// Fixed-format writers. Numbers go through snprintf with pinned precision so
// identical results serialize to identical bytes.

inline std::string summary_csv(const std::vector<CellSummary>& cells) {
  std::string out =
      "strategy,true_c,trials,merged,timeouts,hard_brake_rate_pct,"
      "time_to_merge_mean_s,time_to_merge_median_s,min_ttc_mean_s,min_ttc_median_s\n";
  char line[320];
  for (const CellSummary& c : cells) {
    std::snprintf(line, sizeof(line), "%s,%.2f,%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  c.strategy.c_str(), c.true_c, c.trials, c.merged, c.timeouts,
                  100.0 * c.hard_brake_rate, c.time_to_merge_mean, c.time_to_merge_median,
                  c.min_ttc_mean, c.min_ttc_median);
    out += line;
  }
  return out;
}

inline std::string filter_trace_csv(const std::vector<BeliefTracePoint>& trace) {
  std::string out = "time,mu,minimum,maximum\n";
  char line[160];
  for (const BeliefTracePoint& p : trace) {
    std::snprintf(line, sizeof(line), "%.2f,%.6f,%.6f,%.6f\n", p.t, p.belief.mean_c, p.belief.q05,
                  p.belief.q95);
    out += line;
  }
  return out;
}

inline nlohmann::json trial_to_json(const TrialRecord& rec) {
  nlohmann::json j;
  j["strategy"] = rec.strategy;
  j["true_c"] = rec.true_c;
  j["seed"] = rec.seed;
  j["outcome"] = to_string(rec.outcome);
  j["duration"] = rec.duration;
  j["time_to_merge"] =
      rec.merged() ? nlohmann::json(rec.time_to_merge) : nlohmann::json(nullptr);
  j["min_ttc"] = rec.min_ttc;
  j["hard_brake"] = rec.hard_brake;
  j["override_steps"] = rec.override_steps;
  j["degenerate_filter_steps"] = rec.degenerate_filter_steps;

  const SceneState& s0 = rec.steps.empty() ? rec.final_scene : rec.steps.front().scene;
  j["initial"] = {{"ego", {{"s", s0.ego.s}, {"v", s0.ego.v}, {"vdot", s0.ego.vdot}}},
                  {"trailing", {{"x", s0.trailing.x}, {"v", s0.trailing.v}}},
                  {"lead", {{"x", s0.lead.x}, {"v", s0.lead.v}}},
                  {"true_c", s0.c_T}};

  nlohmann::json steps = nlohmann::json::array();
  for (const StepRecord& st : rec.steps) {
    steps.push_back({{"t", st.t},
                     {"mode", st.command.mode == EgoCommand::Mode::kJerk ? "jerk" : "accel"},
                     {"value", st.command.value},
                     {"override", st.override_fired},
                     {"obs_x", st.obs.trailing_x},
                     {"obs_v", st.obs.trailing_v},
                     {"reward", st.reward},
                     {"ego_s", st.scene.ego.s},
                     {"ego_v", st.scene.ego.v},
                     {"ego_vdot", st.scene.ego.vdot},
                     {"trailing_x", st.scene.trailing.x},
                     {"trailing_v", st.scene.trailing.v}});
  }
  j["steps"] = std::move(steps);

  nlohmann::json trace = nlohmann::json::array();
  for (const BeliefTracePoint& p : rec.belief_trace) {
    trace.push_back({p.t, p.belief.mean_c, p.belief.q05, p.belief.q95});
  }
  j["belief_trace"] = std::move(trace);
  return j;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + path);
  out << text;
  if (!out) throw ConfigError("failed writing output file: " + path);
}

inline void write_trials_jsonl(const std::string& path, const std::vector<TrialRecord>& trials) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file: " + path);
  for (const TrialRecord& rec : trials) out << trial_to_json(rec).dump() << "\n";
  if (!out) throw ConfigError("failed writing output file: " + path);
}

}  // namespace mergeplan
