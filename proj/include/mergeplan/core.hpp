#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "mergeplan/errors.hpp"

namespace mergeplan {

inline constexpr double kDefaultDt = 0.1;      // [s] simulation step
inline constexpr double kEpsilonV = 0.1;       // [m/s] below this a vehicle is "stopped"
inline constexpr double kInfiniteTime = std::numeric_limits<double>::infinity();

// Longitudinal state of a main-lane vehicle. Positions are centers; the
// driving direction is +x and y identifies the lane.
struct VehicleState {
  double x = 0.0;      // [m]
  double y = 0.0;      // [m]
  double v = 0.0;      // [m/s], never negative
  double vdot = 0.0;   // [m/s^2]
  double theta = 0.0;  // [rad] heading, 0 along +x
};

// State of the merging vehicle, parameterized by arc length along the ramp.
struct EgoState {
  double s = 0.0;     // [m] distance traveled along the ramp
  double v = 0.0;     // [m/s], never negative
  double vdot = 0.0;  // [m/s^2]
};

struct Point2d {
  double x = 0.0;
  double y = 0.0;
};

// Merge layout: a straight on-ramp of length ramp_length running parallel to
// the main lane and joining it at merge_point (arc length equals Euclidean
// length). merge_point.y must equal main_lane_y.
struct MergeGeometry {
  double main_lane_y = 0.0;
  Point2d ramp_origin{-150.0, -4.0};
  Point2d merge_point{0.0, 0.0};
  double ramp_length = 150.0;
};

// Acceleration bounds enforced on the merging vehicle's jerk integration.
struct AccelLimits {
  double min = -4.0;  // [m/s^2]
  double max = 2.0;   // [m/s^2]
};

namespace detail {

inline void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) throw InvalidInput(what);
}

}  // namespace detail

// Advances a main-lane vehicle one step under a fixed acceleration applied
// over [t, t+dt]. Speed clamps at zero; position integrates the clamped
// motion exactly for the constant-accel segment.
inline VehicleState propagate_main_lane(const VehicleState& state, double accel, double dt) {
  detail::require_finite(state.x, "propagate_main_lane: non-finite x");
  detail::require_finite(state.v, "propagate_main_lane: non-finite v");
  detail::require_finite(accel, "propagate_main_lane: non-finite accel");
  detail::require_finite(dt, "propagate_main_lane: non-finite dt");

  VehicleState next = state;
  const double v_unclamped = state.v + accel * dt;
  if (v_unclamped >= 0.0) {
    next.v = v_unclamped;
    next.x = state.x + state.v * dt + 0.5 * accel * dt * dt;
    next.vdot = accel;
  } else {
    // Vehicle stops partway through the step; it does not reverse.
    const double t_stop = accel < 0.0 ? state.v / -accel : 0.0;
    next.v = 0.0;
    next.x = state.x + state.v * t_stop + 0.5 * accel * t_stop * t_stop;
    next.vdot = 0.0;
  }
  return next;
}

// Advances the merging vehicle one step under a jerk command. The current
// acceleration acts on speed first, then the jerk updates acceleration,
// clamped to the actor's bounds. Speed clamps at zero.
inline EgoState propagate_ego(const EgoState& state, double jerk, double dt,
                              const AccelLimits& limits = {}) {
  detail::require_finite(state.s, "propagate_ego: non-finite s");
  detail::require_finite(state.v, "propagate_ego: non-finite v");
  detail::require_finite(state.vdot, "propagate_ego: non-finite vdot");
  detail::require_finite(jerk, "propagate_ego: non-finite jerk");

  EgoState next;
  next.s = state.s + state.v * dt;
  next.v = std::max(0.0, state.v + state.vdot * dt);
  next.vdot = std::clamp(state.vdot + jerk * dt, limits.min, limits.max);
  return next;
}

// Advances the merging vehicle one step under a directly commanded
// acceleration (controller output), bypassing jerk integration. The command
// engages and disengages instantaneously, so the stored acceleration returns
// to neutral afterwards: a later jerk-integrated step resumes from zero
// rather than having to ramp away from the commanded value at comfort jerk.
inline EgoState propagate_ego_accel(const EgoState& state, double accel, double dt) {
  detail::require_finite(accel, "propagate_ego_accel: non-finite accel");
  EgoState next;
  next.s = state.s + state.v * dt;
  next.v = std::max(0.0, state.v + accel * dt);
  next.vdot = 0.0;
  return next;
}

// Time for the merging vehicle to reach the merge point at its current
// speed. Zero once past the merge point, infinite when (nearly) stopped.
inline double time_to_merge_ego(const EgoState& state, const MergeGeometry& geom) {
  const double remaining = geom.ramp_length - state.s;
  if (remaining <= 0.0) return 0.0;
  if (state.v < kEpsilonV) return kInfiniteTime;
  return remaining / state.v;
}

// Same for a main-lane vehicle approaching the merge point.
inline double time_to_merge_main(const VehicleState& state, const MergeGeometry& geom) {
  const double remaining = geom.merge_point.x - state.x;
  if (remaining <= 0.0) return 0.0;
  if (state.v < kEpsilonV) return kInfiniteTime;
  return remaining / state.v;
}

// Maps the merging vehicle onto the main lane by ramp arc length: the point
// as far upstream of the merge point as the ego is from merge completion.
// Extends naturally downstream once the ego has merged.
inline VehicleState ego_projection(const EgoState& state, const MergeGeometry& geom) {
  VehicleState proj;
  proj.x = geom.merge_point.x - (geom.ramp_length - state.s);
  proj.y = geom.main_lane_y;
  proj.v = state.v;
  proj.vdot = state.vdot;
  proj.theta = 0.0;
  return proj;
}

}  // namespace mergeplan
