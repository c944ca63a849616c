#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mergeplan/checks.hpp"
#include "mergeplan/errors.hpp"
#include "mergeplan/pomdp.hpp"
#include "mergeplan/random.hpp"

namespace mergeplan {

// One cooperation hypothesis with its privately propagated scene. The scene
// evolves under the particle's own c, so hypotheses that mispredict the
// trailing driver drift measurably away from the observations.
struct Particle {
  double c = 0.5;
  SceneState scene{};
  double weight = 0.0;
};

struct BeliefSummary {
  double mean_c = 0.5;
  double q05 = 0.0;  // 5th weighted percentile
  double q95 = 1.0;  // 95th weighted percentile
};

struct FilterConfig {
  int particle_count = 1000;
  double dither = 0.05;       // magnitude of the per-step c perturbation
  bool ess_gated = false;     // resample only when ESS drops (default: every step)
  double ess_fraction = 0.5;  // resample threshold as a fraction of particle_count
};

// Weighted belief summary over cooperation values. Quantiles come from the
// explicit weighted CDF: the smallest c whose cumulative weight reaches q.
inline BeliefSummary summarize(const std::vector<Particle>& particles) {
  if (particles.empty()) throw InvalidInput("summarize: empty particle set");

  double total = 0.0;
  double mean = 0.0;
  for (const Particle& p : particles) {
    total += p.weight;
    mean += p.weight * p.c;
  }
  if (total <= 0.0) throw InvalidInput("summarize: weights do not sum to a positive value");
  mean /= total;

  std::vector<int> order(particles.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return particles[a].c < particles[b].c; });

  auto quantile = [&](double q) {
    double cum = 0.0;
    for (int idx : order) {
      cum += particles[idx].weight;
      if (cum >= q * total) return particles[idx].c;
    }
    return particles[order.back()].c;
  };

  BeliefSummary out;
  out.mean_c = mean;
  out.q05 = quantile(0.05);
  out.q95 = quantile(0.95);
  MERGEPLAN_CHECK(out.q05 <= out.q95, "belief quantiles out of order");
  MERGEPLAN_CHECK(out.mean_c >= 0.0 && out.mean_c <= 1.0, "belief mean outside [0, 1]");
  return out;
}

// Recursive estimator of the trailing driver's cooperation level.
//
// Per step: every particle predicts the next scene under its own c (the ego
// and lead advance deterministically from the known command), gets weighted
// by the observation likelihood, has its c perturbed by a three-point
// dither, and the population is resampled systematically. Only c survives as
// latent state; everything else is either observed or deterministic.
class ParticleFilter {
 public:
  ParticleFilter(const MergePomdp& model, const SceneObservables& initial,
                 const FilterConfig& config, std::uint64_t seed)
      : model_(&model), config_(config), rng_(seed) {
    if (config.particle_count <= 0) {
      throw InvalidInput("ParticleFilter: particle_count must be positive");
    }
    particles_.reserve(static_cast<std::size_t>(config.particle_count));
    const double w0 = 1.0 / config.particle_count;
    for (int i = 0; i < config.particle_count; ++i) {
      Particle p;
      p.c = uniform_real(rng_, 0.0, 1.0);
      p.scene = with_cooperation(initial, p.c);
      p.weight = w0;
      particles_.push_back(p);
    }
  }

  // Test/replay entry point: adopt an explicit particle population.
  ParticleFilter(const MergePomdp& model, std::vector<Particle> particles,
                 const FilterConfig& config, std::uint64_t seed)
      : model_(&model), config_(config), particles_(std::move(particles)), rng_(seed) {
    if (particles_.empty()) throw InvalidInput("ParticleFilter: empty particle set");
  }

  const std::vector<Particle>& particles() const { return particles_; }
  bool last_step_degenerate() const { return last_step_degenerate_; }
  int degenerate_steps() const { return degenerate_steps_; }
  BeliefSummary summary() const { return summarize(particles_); }

  // Weighted posterior mean of the trailing vehicle's kinematics: the
  // denoised position/speed estimate, conditioned on every observation so
  // far. Decision code should prefer this over a single raw reading.
  VehicleState mean_trailing() const {
    double total = 0.0;
    double x = 0.0;
    double v = 0.0;
    for (const Particle& p : particles_) {
      total += p.weight;
      x += p.weight * p.scene.trailing.x;
      v += p.weight * p.scene.trailing.v;
    }
    if (total <= 0.0) throw InvalidInput("mean_trailing: weights do not sum to a positive value");
    VehicleState out = particles_.front().scene.trailing;
    out.x = x / total;
    out.v = std::max(0.0, v / total);
    out.vdot = 0.0;
    return out;
  }

  // Advances the belief one step given the executed ego command and the new
  // observation of the trailing vehicle. Returns the updated summary.
  BeliefSummary step(const EgoCommand& cmd, const Observation& obs, double dt) {
    const std::size_t count = particles_.size();

    double weight_sum = 0.0;
    for (Particle& p : particles_) {
      p.scene = model_->propagate_scene(p.scene, cmd, dt);
      p.weight *= model_->observation_likelihood(obs, p.scene);
      weight_sum += p.weight;
    }

    last_step_degenerate_ = !(weight_sum > 0.0);
    if (last_step_degenerate_) {
      // Every hypothesis found the observation impossible; fall back to a
      // uniform reweighting instead of dividing by zero.
      ++degenerate_steps_;
      const double w = 1.0 / static_cast<double>(count);
      for (Particle& p : particles_) p.weight = w;
      weight_sum = 1.0;
    }
    for (Particle& p : particles_) p.weight /= weight_sum;

    for (Particle& p : particles_) {
      const int pick = static_cast<int>(rng_() % 3);  // {-1, 0, +1} * dither
      p.c = std::clamp(p.c + (pick - 1) * config_.dither, 0.0, 1.0);
      p.scene.c_T = p.c;
    }

    if (!config_.ess_gated || effective_sample_size() < config_.ess_fraction * count) {
      resample_systematic();
    }

    MERGEPLAN_CHECK(particles_.size() == count, "particle count changed during step");
    for ([[maybe_unused]] const Particle& p : particles_) {
      MERGEPLAN_CHECK(p.c >= 0.0 && p.c <= 1.0, "cooperation hypothesis left [0, 1]");
    }
    return summarize(particles_);
  }

  // 1 / sum(w^2) for normalized weights; equals the count when uniform.
  double effective_sample_size() const {
    double sum_sq = 0.0;
    for (const Particle& p : particles_) sum_sq += p.weight * p.weight;
    return sum_sq > 0.0 ? 1.0 / sum_sq : 0.0;
  }

 private:
  // Low-variance systematic resampling: one uniform offset, K evenly spaced
  // pointers through the cumulative weights.
  void resample_systematic() {
    const std::size_t count = particles_.size();
    std::vector<Particle> next;
    next.reserve(count);
    const double start = uniform_real(rng_, 0.0, 1.0) / static_cast<double>(count);
    double cum = particles_[0].weight;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < count; ++j) {
      const double u = start + static_cast<double>(j) / static_cast<double>(count);
      while (cum < u && idx + 1 < count) cum += particles_[++idx].weight;
      next.push_back(particles_[idx]);
      next.back().weight = 1.0 / static_cast<double>(count);
    }
    particles_ = std::move(next);
  }

  const MergePomdp* model_;
  FilterConfig config_;
  std::vector<Particle> particles_;
  RngStream rng_;
  bool last_step_degenerate_ = false;
  int degenerate_steps_ = 0;
};

}  // namespace mergeplan
