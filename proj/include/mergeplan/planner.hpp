#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mergeplan/core.hpp"
#include "mergeplan/driver_models.hpp"
#include "mergeplan/errors.hpp"
#include "mergeplan/estimation.hpp"
#include "mergeplan/pomcpow.hpp"
#include "mergeplan/pomdp.hpp"
#include "mergeplan/random.hpp"

namespace mergeplan {

struct PlannerConfig {
  int n_queries = 2000;
  int max_depth = 72;
  double ucb_c = 50.0;
  double k_obs = 4.0;
  double alpha_obs = 0.1;
  std::vector<double> action_set = {-0.6, -0.3, 0.0, 0.3, 0.6};  // jerk values

  PomcpowParams search_params() const {
    PomcpowParams p;
    p.n_queries = n_queries;
    p.max_depth = max_depth;
    p.ucb_c = ucb_c;
    p.k_obs = k_obs;
    p.alpha_obs = alpha_obs;
    return p;
  }
};

// Weighted set of root states for the tree search. For the learned strategy
// this is the particle filter's current population (each particle carries
// its own scene); for a fixed strategy it is the observed scene with c_T
// pinned. Sampling always consumes exactly one uniform draw, so a point
// belief and a population degenerate at the same state replay identically
// under the same generator state.
class RootBelief {
 public:
  static RootBelief point(const SceneObservables& scene, double c) {
    RootBelief b;
    b.states_.push_back(with_cooperation(scene, c));
    b.cumulative_.push_back(1.0);
    return b;
  }

  static RootBelief from_particles(const std::vector<Particle>& particles) {
    if (particles.empty()) throw InvalidInput("RootBelief: empty particle set");
    RootBelief b;
    b.states_.reserve(particles.size());
    b.cumulative_.reserve(particles.size());
    double cum = 0.0;
    for (const Particle& p : particles) {
      b.states_.push_back(p.scene);
      cum += p.weight;
      b.cumulative_.push_back(cum);
    }
    if (!(cum > 0.0)) throw InvalidInput("RootBelief: non-positive total weight");
    return b;
  }

  const SceneState& sample(RngStream& rng) const {
    const double u = uniform_real(rng, 0.0, cumulative_.back());
    const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    const std::size_t i = it == cumulative_.end()
                              ? cumulative_.size() - 1
                              : static_cast<std::size_t>(it - cumulative_.begin());
    return states_[i];
  }

  std::size_t size() const { return states_.size(); }

 private:
  std::vector<SceneState> states_;
  std::vector<double> cumulative_;
};

// Adapts MergePomdp to the search interface: jerk actions, generative steps
// at a fixed control period, and a zero-jerk coast rollout.
class MergePlanningModel {
 public:
  using State = SceneState;
  using Action = mergeplan::Action;
  using Observation = mergeplan::Observation;

  MergePlanningModel(const MergePomdp& pomdp, const std::vector<double>& jerk_set, double dt)
      : pomdp_(&pomdp), dt_(dt) {
    if (jerk_set.empty()) throw InvalidInput("MergePlanningModel: empty action set");
    for (double j : jerk_set) actions_.push_back(Action{j});
  }

  const std::vector<Action>& actions() const { return actions_; }
  double discount() const { return pomdp_->discount(); }

  StepSample<State, Observation> step(const State& s, const Action& a, RngStream& rng) const {
    return pomdp_->generative_step(s, a, dt_, rng);
  }

  double reward_to(const State&, const Action&, const State& next) const {
    return pomdp_->reward(next);
  }

  double obs_weight(const Observation& o, const State&, const Action&, const State& next) const {
    return pomdp_->observation_likelihood(o, next);
  }

  bool obs_equal(const Observation& a, const Observation& b) const {
    return a.trailing_x == b.trailing_x && a.trailing_v == b.trailing_v;
  }

  // Coast rollout: hold jerk at zero so the current acceleration persists.
  double rollout_value(const State& s, int depth, RngStream& rng) const {
    double value = 0.0;
    double scale = 1.0;
    State cur = s;
    for (int d = 0; d < depth; ++d) {
      auto sample = pomdp_->generative_step(cur, Action{0.0}, dt_, rng);
      value += scale * sample.reward;
      scale *= pomdp_->discount();
      cur = sample.next;
    }
    return value;
  }

 private:
  const MergePomdp* pomdp_;
  double dt_ = kDefaultDt;
  std::vector<Action> actions_;
};

// One planning decision: search the merge POMDP with root states drawn from
// the belief, one draw per query.
inline Action plan_merge_action(const MergePomdp& pomdp, const RootBelief& belief,
                                const PlannerConfig& config, double dt, RngStream& rng) {
  MergePlanningModel model(pomdp, config.action_set, dt);
  Pomcpow<MergePlanningModel> search(model, config.search_params());
  return search.plan([&belief](RngStream& r) { return belief.sample(r); }, rng);
}

// Ego driven by the stochastic driver model instead of the planner: follow
// the nearest main-lane vehicle ahead of the ego's projected position. The
// commanded acceleration is clamped to the ego's physical envelope.
inline double sidm_ego_step(const SceneObservables& scene, const IdmParams& ego_idm,
                            double sigma_a, const MergeGeometry& geom, double vehicle_length,
                            const AccelLimits& limits, RngStream& rng) {
  const VehicleState proj = ego_projection(scene.ego, geom);
  std::optional<LeaderContext> ctx;
  double best_x = std::numeric_limits<double>::infinity();
  for (const VehicleState* veh : {&scene.trailing, &scene.lead}) {
    if (veh->x > proj.x && veh->x < best_x) {
      best_x = veh->x;
      ctx = detail::leader_context(veh->x, veh->v, proj, vehicle_length);
    }
  }
  const double accel = sidm_accel(ego_idm, sigma_a, scene.ego.v, ctx, rng);
  return std::clamp(accel, limits.min, limits.max);
}

struct OverrideDecision {
  EgoCommand command;
  bool fired = false;
};

// Reflexive safety layer: while the trailing vehicle is within the safety
// distance inside the conflict zone and still closing on the ego's
// projection, replace the upstream command with a fixed hard brake. A gap
// that is already opening recovers on its own (the usual case right after
// the trailing vehicle overtakes the projection), so braking into it would
// not avert anything. The brake is commanded as a direct acceleration so it
// is not subject to the ego's comfort envelope.
inline OverrideDecision emergency_brake_override(const MergePomdp& pomdp,
                                                 const SceneObservables& scene,
                                                 const EgoCommand& upstream,
                                                 double brake_decel) {
  if (!(brake_decel > 0.0)) throw InvalidInput("emergency_brake_override: brake_decel must be > 0");
  const SceneState probe = with_cooperation(scene, 0.0);
  const VehicleState proj = ego_projection(scene.ego, pomdp.geometry());
  const double gap = proj.x - scene.trailing.x;
  const double gap_rate = proj.v - scene.trailing.v;
  const bool closing = (gap > 0.0 ? gap_rate : -gap_rate) < 0.0;
  if (closing && pomdp.proximity_violation(probe)) {
    return OverrideDecision{EgoCommand::direct_accel(-brake_decel), true};
  }
  return OverrideDecision{upstream, false};
}

// Ego control policies compared by the benchmark.
struct Strategy {
  enum class Kind { kLearned, kFixed, kSidm };

  Kind kind = Kind::kLearned;
  double fixed_c = 0.0;  // only read when kind == kFixed

  static Strategy learned() { return Strategy{Kind::kLearned, 0.0}; }
  static Strategy fixed(double c) { return Strategy{Kind::kFixed, c}; }
  static Strategy sidm() { return Strategy{Kind::kSidm, 0.0}; }

  std::string name() const {
    switch (kind) {
      case Kind::kLearned:
        return "learned_c";
      case Kind::kFixed: {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "fixed_c%g", fixed_c);
        return buf;
      }
      case Kind::kSidm:
        return "sidm";
    }
    return "unknown";
  }

  static Strategy parse(const std::string& text) {
    if (text == "learned_c" || text == "learned") return learned();
    if (text == "sidm") return sidm();
    if (text.rfind("fixed_c", 0) == 0) {
      const std::string arg = text.substr(7);
      std::size_t used = 0;
      double c = 0.0;
      try {
        c = std::stod(arg, &used);
      } catch (const std::exception&) {
        throw InvalidInput("unknown strategy: " + text);
      }
      if (used != arg.size() || !(c >= 0.0 && c <= 1.0)) {
        throw InvalidInput("strategy cooperation level out of range: " + text);
      }
      return fixed(c);
    }
    throw InvalidInput("unknown strategy: " + text);
  }
};

}  // namespace mergeplan
