#ifndef TSDIFF_SAMPLER_HPP
#define TSDIFF_SAMPLER_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "tsdiff/constraints.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/projection.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/series.hpp"

namespace tsdiff {

struct SamplerConfig {
  Schedule schedule;
  double eta = 0.0;  // 0 -> fully deterministic reverse process
  std::uint64_t seed = 0;
  std::uint64_t sample_index = 0;  // distinguishes samples of one batch
  ProjectionConfig projection;
  double guidance_weight = 0.0;  // guided baseline only
  bool record_trace = false;
  // Internal switch: with projection disabled the constrained loop reduces to
  // the plain reverse process, byte for byte.
  bool disable_projection = false;
  // Per-step penalty weight; defaults to penalty_coefficient(t, schedule).
  std::function<double(int)> gamma_fn;
};

struct TraceRow {
  int t = 0;
  TimeSeries z0_hat;  // posterior mean before projection
  TimeSeries z0_pr;   // value fed into the recombination
  double pi = 0.0;    // constraint slack measure of z0_pr
};

struct SampleReport {
  TimeSeries sample;
  double violation_total = 0.0;        // recomputed on the final sample, at budget
  Eigen::VectorXd per_constraint;      // same, one entry per constraint
  int steps = 0;
  double wall_time_seconds = 0.0;
  bool converged = true;               // false if any projection failed to converge
  int projection_failures = 0;
  std::vector<TraceRow> trace;
};

namespace detail {

inline void finalize_report(SampleReport& report, TimeSeries sample,
                            const ConstraintSet* set,
                            std::chrono::steady_clock::time_point started) {
  report.sample = std::move(sample);
  if (set) {
    report.per_constraint = per_constraint_violation(report.sample, *set);
    report.violation_total = report.per_constraint.sum();
  } else {
    report.per_constraint.resize(0);
    report.violation_total = 0.0;
  }
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
}

// One full reverse pass. `z0_hook(z0_hat, t)` maps the posterior mean to the
// value used in the recombination; `post_hook(z, t)` may adjust the new
// iterate in place. Step noise comes from stream (seed, sample_index, t) so
// all samplers draw identical randomness at identical call points.
template <typename Z0Hook, typename PostHook>
SampleReport reverse_loop(const Denoiser& d, const ConstraintSet* set,
                          const SamplerConfig& cfg, Z0Hook&& z0_hook,
                          PostHook&& post_hook) {
  const auto started = std::chrono::steady_clock::now();
  Schedule sched = cfg.schedule;
  detail::validate_schedule(sched, /*allow_terminal_beta_one=*/true);
  if (sched.steps != d.steps())
    throw std::invalid_argument("sampler: schedule length does not match denoiser");
  if (cfg.eta != 0.0) apply_eta(sched, cfg.eta);

  const int K = d.channels();
  const int L = d.horizon();
  SampleReport report;
  report.steps = sched.steps;

  TimeSeries z;
  z.values = CounterRng(cfg.seed, cfg.sample_index, 0).normal_matrix(K, L);
  for (int t = sched.steps; t >= 1; --t) {
    const TimeSeries eps_hat = d.predict_noise(z, t);
    const TimeSeries z0_hat = d.posterior_mean_from(z, t, eps_hat);
    TimeSeries z0_used = z0_hook(z0_hat, t, report);
    if (cfg.record_trace) {
      TraceRow row;
      row.t = t;
      row.z0_hat = z0_hat;
      row.z0_pr = z0_used;
      row.pi = set ? violation(z0_used, *set) : 0.0;
      report.trace.push_back(std::move(row));
    }
    const double ab_prev = sched.alpha_bar[t - 1];
    const double sigma_t = sched.sigma[t - 1];
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma_t * sigma_t));
    z.values = std::sqrt(ab_prev) * z0_used.values + dir * eps_hat.values;
    if (sigma_t > 0.0) {
      z.values += sigma_t * CounterRng(cfg.seed, cfg.sample_index,
                                       static_cast<std::uint64_t>(t))
                                .normal_matrix(K, L);
    }
    post_hook(z, t);
    if (!is_finite(z))
      throw NumericalError("sampling produced non-finite values at step t=" +
                           std::to_string(t));
  }
  finalize_report(report, std::move(z), set, started);
  return report;
}

inline TimeSeries identity_z0(const TimeSeries& z0_hat, int, SampleReport&) {
  return z0_hat;
}
inline void identity_post(TimeSeries&, int) {}

}  // namespace detail

// Plain reverse-process sampling (no constraints).
inline SampleReport ddim_sample(const Denoiser& d, const SamplerConfig& cfg) {
  return detail::reverse_loop(d, nullptr, cfg, detail::identity_z0,
                              detail::identity_post);
}

// Constrained sampling: every posterior mean is replaced by its penalty
// projection onto the constraint set before the recombination. The projection
// at step t uses weight gamma_fn(t) and warm-starts from the previous step's
// projected point.
inline SampleReport cps_sample(const Denoiser& d, const ConstraintSet& set,
                               const SamplerConfig& cfg) {
  if (!cfg.disable_projection && set.constraints.empty())
    throw std::invalid_argument(
        "cps_sample: constraint set is empty; use ddim_sample instead");
  const AffineSystem sys = cfg.disable_projection
                               ? AffineSystem{}
                               : compile_affine(set, d.channels(), d.horizon());
  auto gamma_at = [&](int t) {
    return cfg.gamma_fn ? cfg.gamma_fn(t) : penalty_coefficient(t, cfg.schedule);
  };
  Eigen::VectorXd warm;
  bool have_warm = false;
  auto z0_hook = [&](const TimeSeries& z0_hat, int t, SampleReport& report) {
    if (cfg.disable_projection) return z0_hat;
    try {
      ProjectionResult pr =
          project_system(flatten(z0_hat), sys, gamma_at(t), cfg.projection,
                         have_warm ? &warm : nullptr);
      if (!pr.converged) {
        report.converged = false;
        ++report.projection_failures;
      }
      warm = flatten(pr.z_pr);
      have_warm = true;
      return std::move(pr.z_pr);
    } catch (const NumericalError& e) {
      throw NumericalError("projection failed at step t=" + std::to_string(t) +
                           ": " + e.what());
    }
  };
  return detail::reverse_loop(d, &set, cfg, z0_hook, detail::identity_post);
}

// Gradient-guidance baseline: each step applies a subgradient push
// -guidance_weight * dPi/dz evaluated at the posterior mean, and fixed-value
// constraints are additionally written into the iterate directly.
inline SampleReport guided_sample(const Denoiser& d, const ConstraintSet& set,
                                  const SamplerConfig& cfg) {
  if (set.constraints.empty())
    throw std::invalid_argument("guided_sample: constraint set is empty");
  const AffineSystem sys = compile_affine(set, d.channels(), d.horizon());
  struct Fixed {
    int channel, timestep;
    double value;
  };
  std::vector<Fixed> fixed;
  for (const auto& c : set.constraints)
    if (c.kind == ConstraintKind::value_at_timestamp)
      fixed.push_back({c.channel, c.location, c.target});

  TimeSeries last_z0;
  auto z0_hook = [&](const TimeSeries& z0_hat, int, SampleReport&) {
    last_z0 = z0_hat;
    return z0_hat;
  };
  auto post_hook = [&](TimeSeries& z, int) {
    const Eigen::VectorXd g = affine_violation_subgradient(flatten(last_z0), sys);
    z.values -= cfg.guidance_weight * unflatten(g, z.channels(), z.horizon()).values;
    for (const auto& f : fixed) z.values(f.channel, f.timestep) = f.value;
  };
  return detail::reverse_loop(d, &set, cfg, z0_hook, post_hook);
}

namespace detail {

inline SampleReport cop_finish(TimeSeries seed_series, const ConstraintSet& set,
                               const SamplerConfig& cfg, int steps,
                               std::chrono::steady_clock::time_point started) {
  const AffineSystem sys =
      compile_affine(set, seed_series.channels(), seed_series.horizon());
  ProjectionResult pr = project_system(flatten(seed_series), sys,
                                       cfg.schedule.gamma_clip, cfg.projection);
  SampleReport report;
  report.steps = steps;
  if (!pr.converged) {
    report.converged = false;
    report.projection_failures = 1;
  }
  finalize_report(report, std::move(pr.z_pr), &set, started);
  return report;
}

}  // namespace detail

// Distance-only projection baseline, dataset-seeded variant: projects a
// uniformly drawn training sample onto the set with the clip-level weight.
inline SampleReport cop_project_baseline(const Dataset& ds, const ConstraintSet& set,
                                         const SamplerConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  if (ds.count() == 0) throw std::invalid_argument("cop baseline: empty dataset");
  if (set.constraints.empty())
    throw std::invalid_argument("cop baseline: constraint set is empty");
  CounterRng rng(cfg.seed, cfg.sample_index, 0);
  const auto idx = rng.uniform_int(0, ds.count() - 1);
  return detail::cop_finish(ds.samples[static_cast<std::size_t>(idx)], set, cfg, 0,
                            started);
}

// Generated-seed variant: projects an unconstrained generated sample instead.
inline SampleReport cop_project_baseline(const Denoiser& d, const ConstraintSet& set,
                                         const SamplerConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  if (set.constraints.empty())
    throw std::invalid_argument("cop baseline: constraint set is empty");
  SampleReport base = ddim_sample(d, cfg);
  return detail::cop_finish(std::move(base.sample), set, cfg, base.steps, started);
}

}  // namespace tsdiff

#endif  // TSDIFF_SAMPLER_HPP
