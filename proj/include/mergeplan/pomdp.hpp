#pragma once

#include <cmath>

#include "mergeplan/core.hpp"
#include "mergeplan/driver_models.hpp"
#include "mergeplan/random.hpp"

namespace mergeplan {

// Full simulation state of a merge encounter. c_T is the trailing driver's
// latent cooperation level; it never changes within an encounter.
struct SceneState {
  EgoState ego{};
  VehicleState trailing{};
  VehicleState lead{};
  double c_T = 0.0;
};

// What the ego can actually see: everything but c_T. Estimation and planning
// code only ever receives this view, so ground truth cannot leak.
struct SceneObservables {
  EgoState ego{};
  VehicleState trailing{};
  VehicleState lead{};
};

inline SceneObservables observables(const SceneState& s) {
  return SceneObservables{s.ego, s.trailing, s.lead};
}

inline SceneState with_cooperation(const SceneObservables& o, double c) {
  return SceneState{o.ego, o.trailing, o.lead, c};
}

// Planner action: longitudinal jerk applied to the merging vehicle.
struct Action {
  double jerk = 0.0;  // [m/s^3]
};

// Noisy measurement of the trailing vehicle delivered once per step.
struct Observation {
  double trailing_x = 0.0;  // [m]
  double trailing_v = 0.0;  // [m/s]
};

// A resolved control for one step: either a planner jerk or an acceleration
// commanded directly (reflex controllers, emergency braking).
struct EgoCommand {
  enum class Mode { kJerk, kDirectAccel };
  Mode mode = Mode::kJerk;
  double value = 0.0;

  static EgoCommand jerk(double j) { return {Mode::kJerk, j}; }
  static EgoCommand direct_accel(double a) { return {Mode::kDirectAccel, a}; }
};

// Reward weights. All terms are penalties, so rewards are always <= 0. The
// proximity penalty fires when the ego's projection and the trailing vehicle
// are within d_safety of each other while the ego is near merge completion
// (remaining ramp distance below d_activation).
struct RewardParams {
  double lambda_speed = 1.0;        // weight on |v_ego - v_ref|
  double lambda_effort = 1.0;       // weight on |vdot_ego|
  double lambda_proximity = 100.0;  // weight on the safety-distance indicator
  double d_safety = 15.0;           // [m]
  double v_ref = 12.5;              // [m/s]
  double gamma = 0.95;              // discount per step
  double d_activation = 30.0;       // [m] conflict-zone threshold
};

// Measurement noise for the trailing vehicle. With position_only set the
// likelihood scores position alone (speed is still reported in the
// observation and still noisy).
struct ObservationNoise {
  double sigma_x = 0.5;      // [m]
  double sigma_v = 0.5;      // [m/s]
  bool position_only = true;
};

template <class S, class O>
struct StepSample {
  S next{};
  O obs{};
  double reward = 0.0;
};

// Generative model of the merge encounter: trailing vehicle follows the
// cooperation-aware IDM, lead vehicle keeps constant speed, ego integrates
// jerk (or a direct acceleration). One instance is shared by the simulator,
// the particle filter, and the planner, so they can never disagree on the
// dynamics.
class MergePomdp {
 public:
  MergePomdp(const MergeGeometry& geom, const IdmParams& trailing_idm, const RewardParams& reward,
             const ObservationNoise& noise, double vehicle_length = 5.0,
             const AccelLimits& ego_limits = {})
      : geom_(geom),
        trailing_idm_(trailing_idm),
        reward_(reward),
        noise_(noise),
        vehicle_length_(vehicle_length),
        ego_limits_(ego_limits) {}

  const MergeGeometry& geometry() const { return geom_; }
  const IdmParams& trailing_idm() const { return trailing_idm_; }
  const RewardParams& reward_params() const { return reward_; }
  const ObservationNoise& noise() const { return noise_; }
  double vehicle_length() const { return vehicle_length_; }
  const AccelLimits& ego_limits() const { return ego_limits_; }
  double discount() const { return reward_.gamma; }

  double trailing_accel(const SceneState& s) const {
    return cidm_accel(CidmParams{trailing_idm_, s.c_T}, s.trailing, s.ego, s.lead, geom_,
                      vehicle_length_);
  }

  // Deterministic part of the transition, shared by simulation, filtering,
  // and tree search.
  SceneState propagate_scene(const SceneState& s, const EgoCommand& cmd, double dt) const {
    SceneState next;
    next.c_T = s.c_T;
    next.trailing = propagate_main_lane(s.trailing, trailing_accel(s), dt);
    next.lead = propagate_main_lane(s.lead, 0.0, dt);
    next.ego = cmd.mode == EgoCommand::Mode::kJerk
                   ? propagate_ego(s.ego, cmd.value, dt, ego_limits_)
                   : propagate_ego_accel(s.ego, cmd.value, dt);
    return next;
  }

  Observation observe(const SceneState& s, RngStream& rng) const {
    Observation o;
    o.trailing_x = gaussian(rng, s.trailing.x, noise_.sigma_x);
    o.trailing_v = gaussian(rng, s.trailing.v, noise_.sigma_v);
    return o;
  }

  // Density of an observation given the (successor) scene it was taken from.
  double observation_likelihood(const Observation& o, const SceneState& s) const {
    double density = gaussian_pdf(o.trailing_x, s.trailing.x, noise_.sigma_x);
    if (!noise_.position_only) {
      density *= gaussian_pdf(o.trailing_v, s.trailing.v, noise_.sigma_v);
    }
    return density;
  }

  // Center distance between the ego's main-lane projection and the trailing
  // vehicle; the quantity both the reward and the safety override watch.
  double separation(const SceneState& s) const {
    return std::abs(ego_projection(s.ego, geom_).x - s.trailing.x);
  }

  bool in_conflict_zone(const SceneState& s) const {
    return geom_.ramp_length - s.ego.s < reward_.d_activation;
  }

  bool proximity_violation(const SceneState& s) const {
    return in_conflict_zone(s) && separation(s) < reward_.d_safety;
  }

  // State cost: speed tracking, control effort, and the proximity indicator.
  double reward(const SceneState& s) const {
    double r = -reward_.lambda_speed * std::abs(s.ego.v - reward_.v_ref) -
               reward_.lambda_effort * std::abs(s.ego.vdot);
    if (proximity_violation(s)) r -= reward_.lambda_proximity;
    return r;
  }

  StepSample<SceneState, Observation> env_step(const SceneState& s, const EgoCommand& cmd,
                                               double dt, RngStream& rng) const {
    StepSample<SceneState, Observation> out;
    out.next = propagate_scene(s, cmd, dt);
    out.obs = observe(out.next, rng);
    out.reward = reward(out.next);
    return out;
  }

  StepSample<SceneState, Observation> generative_step(const SceneState& s, const Action& a,
                                                      double dt, RngStream& rng) const {
    return env_step(s, EgoCommand::jerk(a.jerk), dt, rng);
  }

 private:
  static double gaussian_pdf(double x, double mean, double sigma) {
    static constexpr double kInvSqrt2Pi = 0.3989422804014327;
    const double z = (x - mean) / sigma;
    return kInvSqrt2Pi / sigma * std::exp(-0.5 * z * z);
  }

  MergeGeometry geom_;
  IdmParams trailing_idm_;
  RewardParams reward_;
  ObservationNoise noise_;
  double vehicle_length_;
  AccelLimits ego_limits_;
};

}  // namespace mergeplan
