#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include "mergeplan/core.hpp"
#include "mergeplan/errors.hpp"
#include "mergeplan/random.hpp"

namespace mergeplan {

// Hard deceleration bound applied to every car-following model output, well
// beyond comfortable braking.
inline constexpr double kHardBrakeLimit = 8.0;  // [m/s^2]

// Gap floor used by scene-level models so overlapping (crashed) states
// produce maximum braking instead of an error.
inline constexpr double kGapFloor = 0.1;  // [m]

struct IdmParams {
  double v_des = 15.0;   // [m/s] desired speed
  double d_min = 2.0;    // [m] minimum bumper-to-bumper gap
  double tau = 1.5;      // [s] desired time headway
  double a_max = 2.0;    // [m/s^2] maximum acceleration
  double b_pref = 3.0;   // [m/s^2] preferred (comfortable) braking
};

// Relation to the current leader. r uses the convention
// r = leader_v - follower_v, so r < 0 means the follower is closing in.
struct LeaderContext {
  double d = 0.0;         // [m] bumper-to-bumper gap, must be positive
  double r = 0.0;         // [m/s] relative speed, leader minus follower
  double leader_v = 0.0;  // [m/s]
};

namespace detail {

inline double clamp_model_accel(double accel, const IdmParams& p) {
  return std::clamp(accel, -kHardBrakeLimit, p.a_max);
}

}  // namespace detail

// Intelligent Driver Model acceleration for a follower at speed v. Without a
// leader only the free-road term applies. The desired gap grows with speed
// and with closing rate, and never falls below d_min.
inline double idm_accel(const IdmParams& p, double v,
                        const std::optional<LeaderContext>& ctx = std::nullopt) {
  detail::require_finite(v, "idm_accel: non-finite v");
  if (v < 0.0) throw InvalidInput("idm_accel: negative speed");
  if (p.v_des <= 0.0 || p.a_max <= 0.0 || p.b_pref <= 0.0) {
    throw InvalidInput("idm_accel: non-positive model parameter");
  }

  const double speed_ratio_sq = (v / p.v_des) * (v / p.v_des);
  double accel = p.a_max * (1.0 - speed_ratio_sq * speed_ratio_sq);

  if (ctx) {
    detail::require_finite(ctx->d, "idm_accel: non-finite gap");
    detail::require_finite(ctx->r, "idm_accel: non-finite relative speed");
    if (ctx->d <= 0.0) throw CollisionState("idm_accel: follower has no headway");
    const double d_des = std::max(
        p.d_min, p.d_min + p.tau * v - v * ctx->r / (2.0 * std::sqrt(p.a_max * p.b_pref)));
    const double ratio = d_des / ctx->d;
    accel -= p.a_max * ratio * ratio;
  }
  return detail::clamp_model_accel(accel, p);
}

// IDM plus a latent cooperation level c controlling whether the driver
// yields to a merging vehicle (see cidm_accel).
struct CidmParams {
  IdmParams idm{};
  double c = 0.0;  // in [0, 1]
};

namespace detail {

inline LeaderContext leader_context(double leader_x, double leader_v, const VehicleState& follower,
                                    double vehicle_length) {
  LeaderContext ctx;
  ctx.d = std::max(kGapFloor, leader_x - follower.x - vehicle_length);
  ctx.r = leader_v - follower.v;
  ctx.leader_v = leader_v;
  return ctx;
}

}  // namespace detail

// Cooperative IDM acceleration for the trailing main-lane vehicle.
//
// While the ego is merging (0 <= s < ramp_length) and its main-lane
// projection sits ahead of the trailing vehicle, the driver yields iff
//     TTM(ego) < c * TTM(trailing),
// treating the projection as its leader; otherwise it follows its actual
// main-lane leader. Once the ego has merged it is an ordinary main-lane
// actor and becomes the leader whenever it sits between trailing and lead.
inline double cidm_accel(const CidmParams& p, const VehicleState& trailing, const EgoState& ego,
                         const VehicleState& lead, const MergeGeometry& geom,
                         double vehicle_length = 5.0) {
  if (p.c < 0.0 || p.c > 1.0 || !std::isfinite(p.c)) {
    throw InvalidInput("cidm_accel: cooperation level outside [0, 1]");
  }

  const VehicleState proj = ego_projection(ego, geom);
  const bool ego_merging = ego.s >= 0.0 && ego.s < geom.ramp_length;
  const bool proj_ahead = proj.x - trailing.x - vehicle_length > 0.0;

  if (ego_merging && proj_ahead) {
    const double ttm_ego = time_to_merge_ego(ego, geom);
    const double ttm_trailing = time_to_merge_main(trailing, geom);
    const bool yields = std::isfinite(ttm_ego)
                            ? ttm_ego < p.c * ttm_trailing
                            : false;  // a stalled ego is never reached first
    if (yields) {
      return idm_accel(p.idm, trailing.v,
                       detail::leader_context(proj.x, proj.v, trailing, vehicle_length));
    }
  }

  const bool merged_between = !ego_merging && ego.s >= geom.ramp_length &&
                              proj.x > trailing.x && proj.x < lead.x;
  if (merged_between) {
    return idm_accel(p.idm, trailing.v,
                     detail::leader_context(proj.x, proj.v, trailing, vehicle_length));
  }
  return idm_accel(p.idm, trailing.v,
                   detail::leader_context(lead.x, lead.v, trailing, vehicle_length));
}

// Stochastic IDM: the IDM response perturbed by zero-mean Gaussian noise,
// clamped to the same bounds as the deterministic model.
inline double sidm_accel(const IdmParams& p, double sigma_a, double v,
                         const std::optional<LeaderContext>& ctx, RngStream& rng) {
  const double nominal = idm_accel(p, v, ctx);
  return detail::clamp_model_accel(nominal + gaussian(rng, 0.0, sigma_a), p);
}

}  // namespace mergeplan
