#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mergeplan/core.hpp"
#include "mergeplan/driver_models.hpp"
#include "mergeplan/errors.hpp"
#include "mergeplan/estimation.hpp"
#include "mergeplan/planner.hpp"
#include "mergeplan/pomdp.hpp"
#include "mergeplan/random.hpp"

namespace mergeplan {

// Closed interval sampled uniformly. lo == hi pins the value.
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  double sample(RngStream& rng) const { return lo == hi ? lo : uniform_real(rng, lo, hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// Initial-condition distribution for generated merge scenarios. Trailing and
// ego starts are coupled through the merge-time difference rather than drawn
// independently, so every accepted draw is a genuine merge conflict.
struct ScenarioRanges {
  Range ego_speed{12.0, 13.0};
  Range ego_accel{0.0, 0.0};
  Range ego_start_window{0.0, 60.0};  // accepted ego ramp positions [m]
  Range trailing_speed{14.5, 15.5};
  Range trailing_distance{155.0, 185.0};  // trailing vehicle to merge point [m]
  Range ttm_delta{-0.45, -0.05};          // merge-time difference, ego minus trailing [s]
  double ttm_conflict_tolerance = 0.5;    // max |merge-time difference| for a conflict [s]
  double lead_gap = 60.0;                 // lead ahead of trailing at start [m]
};

struct SafetyConfig {
  double brake_decel = 6.0;  // emergency override deceleration [m/s^2]
  double ttc_cap = 30.0;     // reported minimum time-to-collision is capped here [s]
};

// Everything a benchmark trial needs: geometry, driver models, reward,
// sensing, filter, planner, and the scenario distribution.
struct ScenarioConfig {
  double dt = kDefaultDt;
  double t_max = 30.0;
  double vehicle_length = 5.0;
  MergeGeometry geometry;
  ScenarioRanges scenario;
  IdmParams main_idm;  // trailing and lead vehicles
  // Stochastic-driver ego baseline; its free speed matches the planner's
  // reference speed so the two ego policies pursue the same cruise target.
  IdmParams ego_idm{.v_des = 12.5};
  double sigma_a = 0.3;
  AccelLimits ego_limits;
  RewardParams reward;
  ObservationNoise noise;
  FilterConfig filter;
  PlannerConfig planner;
  SafetyConfig safety;
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                       const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const std::string& k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
  }
}

inline double get_number(const nlohmann::json& j, const std::string& key, double fallback,
                         const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) throw ConfigError(where + "." + key + ": expected a number");
  return v.get<double>();
}

inline bool get_bool(const nlohmann::json& j, const std::string& key, bool fallback,
                     const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(where + "." + key + ": expected a boolean");
  return v.get<bool>();
}

inline int get_int(const nlohmann::json& j, const std::string& key, int fallback,
                   const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(where + "." + key + ": expected an integer");
  return v.get<int>();
}

inline Range get_range(const nlohmann::json& j, const std::string& key, Range fallback,
                       const std::string& where) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ConfigError(where + "." + key + ": expected [lo, hi]");
  }
  Range r{v[0].get<double>(), v[1].get<double>()};
  if (r.lo > r.hi) throw ConfigError(where + "." + key + ": lo exceeds hi");
  return r;
}

inline nlohmann::json range_json(const Range& r) { return nlohmann::json::array({r.lo, r.hi}); }

inline IdmParams get_idm(const nlohmann::json& j, const IdmParams& fallback,
                         const std::string& where) {
  check_keys(j, {"v_des", "d_min", "tau", "a_max", "b_pref"}, where);
  IdmParams p;
  p.v_des = get_number(j, "v_des", fallback.v_des, where);
  p.d_min = get_number(j, "d_min", fallback.d_min, where);
  p.tau = get_number(j, "tau", fallback.tau, where);
  p.a_max = get_number(j, "a_max", fallback.a_max, where);
  p.b_pref = get_number(j, "b_pref", fallback.b_pref, where);
  if (p.v_des <= 0 || p.d_min <= 0 || p.tau < 0 || p.a_max <= 0 || p.b_pref <= 0) {
    throw ConfigError(where + ": driver parameters must be positive (tau may be zero)");
  }
  return p;
}

inline nlohmann::json idm_json(const IdmParams& p) {
  return {{"v_des", p.v_des}, {"d_min", p.d_min}, {"tau", p.tau},
          {"a_max", p.a_max}, {"b_pref", p.b_pref}};
}

}  // namespace detail

inline void validate_config(const ScenarioConfig& c) {
  if (!(c.dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(c.t_max > 0.0)) throw ConfigError("t_max must be positive");
  if (!(c.vehicle_length > 0.0)) throw ConfigError("vehicle_length must be positive");
  if (!(c.geometry.ramp_length > 0.0)) throw ConfigError("geometry.ramp_length must be positive");
  if (!(c.scenario.ego_speed.lo > 0.0)) throw ConfigError("scenario.ego_speed must be positive");
  if (!(c.scenario.trailing_speed.lo > 0.0)) {
    throw ConfigError("scenario.trailing_speed must be positive");
  }
  if (!(c.scenario.trailing_distance.lo > 0.0)) {
    throw ConfigError("scenario.trailing_distance must be positive");
  }
  if (!(c.scenario.ttm_conflict_tolerance > 0.0)) {
    throw ConfigError("scenario.ttm_conflict_tolerance must be positive");
  }
  const double tol = c.scenario.ttm_conflict_tolerance;
  if (c.scenario.ttm_delta.lo < -tol || c.scenario.ttm_delta.hi > tol) {
    throw ConfigError("scenario.ttm_delta must lie within the conflict tolerance");
  }
  if (!(c.scenario.lead_gap > c.vehicle_length)) {
    throw ConfigError("scenario.lead_gap must exceed vehicle_length");
  }
  if (c.sigma_a < 0.0) throw ConfigError("driver.sigma_a must be non-negative");
  if (!(c.ego_limits.min < 0.0) || !(c.ego_limits.max > 0.0)) {
    throw ConfigError("ego_limits must bracket zero");
  }
  if (c.reward.lambda_speed < 0 || c.reward.lambda_effort < 0 || c.reward.lambda_proximity < 0) {
    throw ConfigError("reward weights must be non-negative");
  }
  if (!(c.reward.d_safety > 0.0)) throw ConfigError("reward.d_safety must be positive");
  if (!(c.reward.v_ref > 0.0)) throw ConfigError("reward.v_ref must be positive");
  if (!(c.reward.gamma > 0.0 && c.reward.gamma < 1.0)) {
    throw ConfigError("reward.gamma must lie in (0, 1)");
  }
  if (!(c.reward.d_activation > 0.0)) throw ConfigError("reward.d_activation must be positive");
  if (!(c.noise.sigma_x > 0.0)) throw ConfigError("observation.sigma_x must be positive");
  if (!c.noise.position_only && !(c.noise.sigma_v > 0.0)) {
    throw ConfigError("observation.sigma_v must be positive when speed is observed");
  }
  if (c.filter.particle_count < 2) throw ConfigError("filter.particle_count must be at least 2");
  if (c.filter.dither < 0.0) throw ConfigError("filter.dither must be non-negative");
  if (!(c.filter.ess_fraction > 0.0 && c.filter.ess_fraction <= 1.0)) {
    throw ConfigError("filter.ess_fraction must lie in (0, 1]");
  }
  if (c.planner.n_queries < 1) throw ConfigError("planner.n_queries must be positive");
  if (c.planner.max_depth < 1) throw ConfigError("planner.max_depth must be positive");
  if (!(c.planner.ucb_c > 0.0)) throw ConfigError("planner.ucb_c must be positive");
  if (!(c.planner.k_obs > 0.0)) throw ConfigError("planner.k_obs must be positive");
  if (!(c.planner.alpha_obs > 0.0 && c.planner.alpha_obs < 1.0)) {
    throw ConfigError("planner.alpha_obs must lie in (0, 1)");
  }
  if (c.planner.action_set.empty()) throw ConfigError("planner.action_set must not be empty");
  if (!(c.safety.brake_decel > 0.0)) throw ConfigError("safety.brake_decel must be positive");
  if (!(c.safety.ttc_cap > 0.0)) throw ConfigError("safety.ttc_cap must be positive");
}

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  using detail::check_keys;
  using detail::get_bool;
  using detail::get_int;
  using detail::get_number;
  using detail::get_range;

  check_keys(j,
             {"dt", "t_max", "vehicle_length", "geometry", "scenario", "driver", "ego_limits",
              "reward", "observation", "filter", "planner", "safety"},
             "config");
  ScenarioConfig c;
  c.dt = get_number(j, "dt", c.dt, "config");
  c.t_max = get_number(j, "t_max", c.t_max, "config");
  c.vehicle_length = get_number(j, "vehicle_length", c.vehicle_length, "config");

  if (j.contains("geometry")) {
    const auto& g = j.at("geometry");
    check_keys(g, {"ramp_length", "merge_point_x", "main_lane_y", "ramp_origin_y"}, "geometry");
    c.geometry.ramp_length = get_number(g, "ramp_length", c.geometry.ramp_length, "geometry");
    c.geometry.merge_point.x = get_number(g, "merge_point_x", c.geometry.merge_point.x, "geometry");
    c.geometry.main_lane_y = get_number(g, "main_lane_y", c.geometry.main_lane_y, "geometry");
    c.geometry.merge_point.y = c.geometry.main_lane_y;
    c.geometry.ramp_origin.y = get_number(g, "ramp_origin_y", c.geometry.ramp_origin.y, "geometry");
    c.geometry.ramp_origin.x = c.geometry.merge_point.x - c.geometry.ramp_length;
  }

  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    check_keys(s,
               {"ego_speed", "ego_accel", "ego_start_window", "trailing_speed",
                "trailing_distance", "ttm_delta", "ttm_conflict_tolerance", "lead_gap"},
               "scenario");
    c.scenario.ego_speed = get_range(s, "ego_speed", c.scenario.ego_speed, "scenario");
    c.scenario.ego_accel = get_range(s, "ego_accel", c.scenario.ego_accel, "scenario");
    c.scenario.ego_start_window =
        get_range(s, "ego_start_window", c.scenario.ego_start_window, "scenario");
    c.scenario.trailing_speed =
        get_range(s, "trailing_speed", c.scenario.trailing_speed, "scenario");
    c.scenario.trailing_distance =
        get_range(s, "trailing_distance", c.scenario.trailing_distance, "scenario");
    c.scenario.ttm_delta = get_range(s, "ttm_delta", c.scenario.ttm_delta, "scenario");
    c.scenario.ttm_conflict_tolerance =
        get_number(s, "ttm_conflict_tolerance", c.scenario.ttm_conflict_tolerance, "scenario");
    c.scenario.lead_gap = get_number(s, "lead_gap", c.scenario.lead_gap, "scenario");
  }

  if (j.contains("driver")) {
    const auto& d = j.at("driver");
    check_keys(d, {"main", "ego", "sigma_a"}, "driver");
    if (d.contains("main")) c.main_idm = detail::get_idm(d.at("main"), c.main_idm, "driver.main");
    if (d.contains("ego")) c.ego_idm = detail::get_idm(d.at("ego"), c.ego_idm, "driver.ego");
    c.sigma_a = get_number(d, "sigma_a", c.sigma_a, "driver");
  }

  if (j.contains("ego_limits")) {
    const auto& e = j.at("ego_limits");
    check_keys(e, {"min_accel", "max_accel"}, "ego_limits");
    c.ego_limits.min = get_number(e, "min_accel", c.ego_limits.min, "ego_limits");
    c.ego_limits.max = get_number(e, "max_accel", c.ego_limits.max, "ego_limits");
  }

  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    check_keys(r,
               {"lambda_speed", "lambda_effort", "lambda_proximity", "d_safety", "v_ref", "gamma",
                "d_activation"},
               "reward");
    c.reward.lambda_speed = get_number(r, "lambda_speed", c.reward.lambda_speed, "reward");
    c.reward.lambda_effort = get_number(r, "lambda_effort", c.reward.lambda_effort, "reward");
    c.reward.lambda_proximity =
        get_number(r, "lambda_proximity", c.reward.lambda_proximity, "reward");
    c.reward.d_safety = get_number(r, "d_safety", c.reward.d_safety, "reward");
    c.reward.v_ref = get_number(r, "v_ref", c.reward.v_ref, "reward");
    c.reward.gamma = get_number(r, "gamma", c.reward.gamma, "reward");
    c.reward.d_activation = get_number(r, "d_activation", c.reward.d_activation, "reward");
  }

  if (j.contains("observation")) {
    const auto& o = j.at("observation");
    check_keys(o, {"sigma_x", "sigma_v", "position_only"}, "observation");
    c.noise.sigma_x = get_number(o, "sigma_x", c.noise.sigma_x, "observation");
    c.noise.sigma_v = get_number(o, "sigma_v", c.noise.sigma_v, "observation");
    c.noise.position_only = get_bool(o, "position_only", c.noise.position_only, "observation");
  }

  if (j.contains("filter")) {
    const auto& f = j.at("filter");
    check_keys(f, {"particle_count", "dither", "ess_gated", "ess_fraction"}, "filter");
    c.filter.particle_count = get_int(f, "particle_count", c.filter.particle_count, "filter");
    c.filter.dither = get_number(f, "dither", c.filter.dither, "filter");
    c.filter.ess_gated = get_bool(f, "ess_gated", c.filter.ess_gated, "filter");
    c.filter.ess_fraction = get_number(f, "ess_fraction", c.filter.ess_fraction, "filter");
  }

  if (j.contains("planner")) {
    const auto& p = j.at("planner");
    check_keys(p, {"n_queries", "max_depth", "ucb_c", "k_obs", "alpha_obs", "action_set"},
               "planner");
    c.planner.n_queries = get_int(p, "n_queries", c.planner.n_queries, "planner");
    c.planner.max_depth = get_int(p, "max_depth", c.planner.max_depth, "planner");
    c.planner.ucb_c = get_number(p, "ucb_c", c.planner.ucb_c, "planner");
    c.planner.k_obs = get_number(p, "k_obs", c.planner.k_obs, "planner");
    c.planner.alpha_obs = get_number(p, "alpha_obs", c.planner.alpha_obs, "planner");
    if (p.contains("action_set")) {
      const auto& a = p.at("action_set");
      if (!a.is_array() || a.empty()) throw ConfigError("planner.action_set: expected an array");
      c.planner.action_set.clear();
      for (const auto& v : a) {
        if (!v.is_number()) throw ConfigError("planner.action_set: expected numbers");
        c.planner.action_set.push_back(v.get<double>());
      }
    }
  }

  if (j.contains("safety")) {
    const auto& s = j.at("safety");
    check_keys(s, {"brake_decel", "ttc_cap"}, "safety");
    c.safety.brake_decel = get_number(s, "brake_decel", c.safety.brake_decel, "safety");
    c.safety.ttc_cap = get_number(s, "ttc_cap", c.safety.ttc_cap, "safety");
  }

  validate_config(c);
  return c;
}

inline nlohmann::json config_to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["dt"] = c.dt;
  j["t_max"] = c.t_max;
  j["vehicle_length"] = c.vehicle_length;
  j["geometry"] = {{"ramp_length", c.geometry.ramp_length},
                   {"merge_point_x", c.geometry.merge_point.x},
                   {"main_lane_y", c.geometry.main_lane_y},
                   {"ramp_origin_y", c.geometry.ramp_origin.y}};
  j["scenario"] = {{"ego_speed", detail::range_json(c.scenario.ego_speed)},
                   {"ego_accel", detail::range_json(c.scenario.ego_accel)},
                   {"ego_start_window", detail::range_json(c.scenario.ego_start_window)},
                   {"trailing_speed", detail::range_json(c.scenario.trailing_speed)},
                   {"trailing_distance", detail::range_json(c.scenario.trailing_distance)},
                   {"ttm_delta", detail::range_json(c.scenario.ttm_delta)},
                   {"ttm_conflict_tolerance", c.scenario.ttm_conflict_tolerance},
                   {"lead_gap", c.scenario.lead_gap}};
  j["driver"] = {{"main", detail::idm_json(c.main_idm)},
                 {"ego", detail::idm_json(c.ego_idm)},
                 {"sigma_a", c.sigma_a}};
  j["ego_limits"] = {{"min_accel", c.ego_limits.min}, {"max_accel", c.ego_limits.max}};
  j["reward"] = {{"lambda_speed", c.reward.lambda_speed},
                 {"lambda_effort", c.reward.lambda_effort},
                 {"lambda_proximity", c.reward.lambda_proximity},
                 {"d_safety", c.reward.d_safety},
                 {"v_ref", c.reward.v_ref},
                 {"gamma", c.reward.gamma},
                 {"d_activation", c.reward.d_activation}};
  j["observation"] = {{"sigma_x", c.noise.sigma_x},
                      {"sigma_v", c.noise.sigma_v},
                      {"position_only", c.noise.position_only}};
  j["filter"] = {{"particle_count", c.filter.particle_count},
                 {"dither", c.filter.dither},
                 {"ess_gated", c.filter.ess_gated},
                 {"ess_fraction", c.filter.ess_fraction}};
  j["planner"] = {{"n_queries", c.planner.n_queries},
                  {"max_depth", c.planner.max_depth},
                  {"ucb_c", c.planner.ucb_c},
                  {"k_obs", c.planner.k_obs},
                  {"alpha_obs", c.planner.alpha_obs},
                  {"action_set", c.planner.action_set}};
  j["safety"] = {{"brake_decel", c.safety.brake_decel}, {"ttc_cap", c.safety.ttc_cap}};
  return j;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse config file " + path + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace mergeplan
