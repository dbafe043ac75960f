#ifndef TSDIFF_SCHEDULE_HPP
#define TSDIFF_SCHEDULE_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "tsdiff/config.hpp"

namespace tsdiff {

// Diffusion coefficients for a T-step reverse process.
//
// Indexing convention: step indices t run 1..T as in the update rule;
// alpha_bar has T+1 entries with alpha_bar[0] = 1, and beta/sigma have T
// entries where entry t-1 belongs to step t.
struct Schedule {
  int steps = 0;
  Eigen::VectorXd beta;       // size T
  Eigen::VectorXd alpha_bar;  // size T+1
  Eigen::VectorXd sigma;      // size T, sigma[0] (step 1) always 0
  double gamma_clip = 100000.0;

  double alpha_bar_at(int t) const {
    if (t < 0 || t > steps)
      throw std::invalid_argument("alpha_bar index out of range: t=" + std::to_string(t));
    return alpha_bar[t];
  }
  double beta_at(int t) const {
    if (t < 1 || t > steps)
      throw std::invalid_argument("beta index out of range: t=" + std::to_string(t));
    return beta[t - 1];
  }
  double sigma_at(int t) const {
    if (t < 1 || t > steps)
      throw std::invalid_argument("sigma index out of range: t=" + std::to_string(t));
    return sigma[t - 1];
  }
};

namespace detail {

inline void validate_schedule(const Schedule& s, bool allow_terminal_beta_one) {
  if (s.steps < 1) throw std::invalid_argument("schedule must have at least one step");
  if (s.alpha_bar.size() != s.steps + 1 || s.beta.size() != s.steps ||
      s.sigma.size() != s.steps)
    throw std::invalid_argument("schedule array sizes inconsistent with step count");
  if (s.alpha_bar[0] != 1.0) throw std::invalid_argument("alpha_bar[0] must be exactly 1");
  for (int t = 1; t <= s.steps; ++t) {
    const double ab = s.alpha_bar[t];
    if (!(ab >= 0.0 && ab <= 1.0))
      throw std::invalid_argument("alpha_bar out of [0,1] at t=" + std::to_string(t));
    if (!(ab < s.alpha_bar[t - 1]))
      throw std::invalid_argument("alpha_bar must be strictly decreasing at t=" +
                                  std::to_string(t));
    const double b = s.beta[t - 1];
    const double hi_ok = allow_terminal_beta_one ? (b <= 1.0) : (b < 1.0);
    if (!(b > 0.0 && hi_ok))
      throw std::invalid_argument("beta out of range at t=" + std::to_string(t));
  }
  if (s.sigma[0] != 0.0) throw std::invalid_argument("sigma at step 1 must be 0");
  for (int t = 1; t <= s.steps; ++t) {
    if (!(s.sigma[t - 1] >= 0.0))
      throw std::invalid_argument("sigma must be nonnegative at t=" + std::to_string(t));
    if (1.0 - s.alpha_bar[t - 1] - s.sigma[t - 1] * s.sigma[t - 1] < 0.0)
      throw std::invalid_argument("sigma too large at t=" + std::to_string(t));
  }
  if (!(s.gamma_clip > 0.0)) throw std::invalid_argument("gamma_clip must be positive");
}

}  // namespace detail

inline Schedule linear_schedule(int steps, double beta_min = 1e-4, double beta_max = 0.02) {
  if (steps < 1) throw std::invalid_argument("step count must be >= 1");
  if (!(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0))
    throw std::invalid_argument("betas must satisfy 0 < beta_min <= beta_max < 1");
  Schedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha_bar.resize(steps + 1);
  s.sigma = Eigen::VectorXd::Zero(steps);
  s.alpha_bar[0] = 1.0;
  double running = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    const double b = beta_min + frac * (beta_max - beta_min);
    s.beta[t - 1] = b;
    running *= 1.0 - b;
    s.alpha_bar[t] = running;
  }
  detail::validate_schedule(s, false);
  return s;
}

// Builds a schedule from an explicit alpha_bar array (alpha_bar[0] must be 1,
// strictly decreasing, within [0,1]). A terminal alpha_bar of exactly 0 is
// allowed, which makes the derived terminal beta equal 1.
inline Schedule schedule_from_alpha_bar(const Eigen::VectorXd& alpha_bar,
                                        double gamma_clip = 100000.0) {
  if (alpha_bar.size() < 2)
    throw std::invalid_argument("alpha_bar needs at least two entries");
  Schedule s;
  s.steps = static_cast<int>(alpha_bar.size()) - 1;
  s.alpha_bar = alpha_bar;
  s.beta.resize(s.steps);
  s.sigma = Eigen::VectorXd::Zero(s.steps);
  s.gamma_clip = gamma_clip;
  for (int t = 1; t <= s.steps; ++t) {
    const double prev = alpha_bar[t - 1];
    if (prev <= 0.0)
      throw std::invalid_argument("alpha_bar may reach 0 only at the terminal step");
    s.beta[t - 1] = 1.0 - alpha_bar[t] / prev;
  }
  detail::validate_schedule(s, true);
  return s;
}

// Analysis-harness schedule alpha_bar_t = 1 - t/T with exact endpoints 1 and 0.
inline Schedule harness_schedule(int steps, double gamma_clip = 100000.0) {
  if (steps < 1) throw std::invalid_argument("step count must be >= 1");
  Eigen::VectorXd ab(steps + 1);
  for (int t = 0; t <= steps; ++t)
    ab[t] = static_cast<double>(steps - t) / static_cast<double>(steps);
  return schedule_from_alpha_bar(ab, gamma_clip);
}

// Populates sigma from the standard DDIM interpolation parameter eta in [0,1]:
//   sigma_t = eta * sqrt((1-ab_{t-1})/(1-ab_t)) * sqrt(1 - ab_t/ab_{t-1}),
// with sigma_1 forced to 0 so the final step is always deterministic.
inline void apply_eta(Schedule& s, double eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in [0,1]");
  s.sigma = Eigen::VectorXd::Zero(s.steps);
  for (int t = 2; t <= s.steps; ++t) {
    const double ab_prev = s.alpha_bar[t - 1];
    const double ab = s.alpha_bar[t];
    const double sig =
        eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
    // Guard the Eq.-2 square root against round-off.
    s.sigma[t - 1] = std::min(sig, std::sqrt(std::max(0.0, 1.0 - ab_prev)));
  }
}

// Penalty coefficient gamma = exp(1/(1-alpha_bar_prev)) clipped; the
// alpha_bar_prev = 1 limit (first step) saturates to the clip.
inline double penalty_from_alpha_bar_prev(double alpha_bar_prev, double gamma_clip) {
  if (!(alpha_bar_prev >= 0.0 && alpha_bar_prev <= 1.0))
    throw std::invalid_argument("alpha_bar_prev must lie in [0,1]");
  const double gap = 1.0 - alpha_bar_prev;
  if (gap <= 0.0) return gamma_clip;
  const double exponent = 1.0 / gap;
  if (exponent >= std::log(gamma_clip)) return gamma_clip;
  return std::min(std::exp(exponent), gamma_clip);
}

inline double penalty_coefficient(int t, const Schedule& s) {
  if (t < 1 || t > s.steps)
    throw std::invalid_argument("penalty step index out of range: t=" + std::to_string(t));
  return penalty_from_alpha_bar_prev(s.alpha_bar[t - 1], s.gamma_clip);
}

// Analysis-harness penalty gamma(t) = 2k(T-t+1)/lambda_min, k > 1, unclipped.
inline double theorem2_penalty(int t, int steps, double k, double lambda_min) {
  if (!(k > 1.0)) throw std::invalid_argument("penalty design parameter k must be > 1");
  if (!(lambda_min > 0.0)) throw std::invalid_argument("lambda_min must be positive");
  if (t < 1 || t > steps)
    throw std::invalid_argument("penalty step index out of range: t=" + std::to_string(t));
  return 2.0 * k * static_cast<double>(steps - t + 1) / lambda_min;
}

// Generator parameters for a linear schedule; the serialized form of a
// Schedule in run configs.
struct ScheduleSpec {
  int steps = 200;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  double eta = 0.0;
  double gamma_clip = 100000.0;
};

inline ScheduleSpec schedule_spec_from_config(const ConfigMap& cfg) {
  ScheduleSpec spec;
  spec.steps = static_cast<int>(cfg.get_int("schedule.steps", spec.steps));
  spec.beta_min = cfg.get_real("schedule.beta_min", spec.beta_min);
  spec.beta_max = cfg.get_real("schedule.beta_max", spec.beta_max);
  spec.eta = cfg.get_real("schedule.eta", spec.eta);
  spec.gamma_clip = cfg.get_real("schedule.gamma_clip", spec.gamma_clip);
  return spec;
}

inline void schedule_spec_to_config(const ScheduleSpec& spec, ConfigMap& cfg) {
  cfg.set_int("schedule.steps", spec.steps);
  cfg.set_real("schedule.beta_min", spec.beta_min);
  cfg.set_real("schedule.beta_max", spec.beta_max);
  cfg.set_real("schedule.eta", spec.eta);
  cfg.set_real("schedule.gamma_clip", spec.gamma_clip);
}

inline Schedule make_schedule(const ScheduleSpec& spec) {
  Schedule s = linear_schedule(spec.steps, spec.beta_min, spec.beta_max);
  s.gamma_clip = spec.gamma_clip;
  if (!(s.gamma_clip > 0.0)) throw std::invalid_argument("gamma_clip must be positive");
  if (spec.eta != 0.0) apply_eta(s, spec.eta);
  return s;
}

}  // namespace tsdiff

#endif  // TSDIFF_SCHEDULE_HPP
