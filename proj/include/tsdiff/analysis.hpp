#ifndef TSDIFF_ANALYSIS_HPP
#define TSDIFF_ANALYSIS_HPP

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsdiff/constraints.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/sampler.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/series.hpp"

namespace tsdiff {

// Closed-form verification setting: data prior N(mu, I) on R^n, constraint set
// {z : A z = y} with a full-column-rank tall A, so the feasible set is the
// single point x_star.
struct GaussianLinearInstance {
  int n = 0;
  int m = 0;
  Eigen::MatrixXd A;      // m x n, rank n
  Eigen::VectorXd y;      // consistent right-hand side
  Eigen::VectorXd mu;     // prior mean
  Eigen::VectorXd x_star; // unique feasible point
  double lambda_min = 0.0;  // extreme eigenvalues of A^T A
  double lambda_max = 0.0;
};

// Least-squares solution of A x = y with an explicit rank and consistency
// check (the verification setting requires the system to have an exact
// solution).
inline Eigen::VectorXd solve_x_star(const Eigen::MatrixXd& A, const Eigen::VectorXd& y) {
  if (A.rows() < A.cols() || A.cols() < 1)
    throw std::invalid_argument("solve_x_star: need a tall matrix (m >= n >= 1)");
  if (y.size() != A.rows()) throw std::invalid_argument("solve_x_star: size mismatch");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv[sv.size() - 1] <= 1e-8 * sv[0])
    throw std::invalid_argument("solve_x_star: matrix is numerically rank-deficient");
  const Eigen::VectorXd x = svd.solve(y);
  if ((A * x - y).norm() > 1e-8 * (1.0 + y.norm()))
    throw std::invalid_argument("solve_x_star: system is inconsistent (no exact solution)");
  return x;
}

inline GaussianLinearInstance make_instance(Eigen::MatrixXd A, Eigen::VectorXd y,
                                            Eigen::VectorXd mu) {
  GaussianLinearInstance inst;
  inst.m = static_cast<int>(A.rows());
  inst.n = static_cast<int>(A.cols());
  if (mu.size() != inst.n) throw std::invalid_argument("make_instance: mu size mismatch");
  inst.x_star = solve_x_star(A, y);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A.transpose() * A);
  inst.lambda_min = es.eigenvalues().minCoeff();
  inst.lambda_max = es.eigenvalues().maxCoeff();
  inst.A = std::move(A);
  inst.y = std::move(y);
  inst.mu = std::move(mu);
  return inst;
}

// Random full-rank instance: standard normal A and mu, y constructed as
// A x_target so it is consistent by construction.
inline GaussianLinearInstance random_instance(int n, int m, std::uint64_t seed,
                                              std::uint64_t index = 0) {
  if (n < 1 || m < n) throw std::invalid_argument("random_instance: need m >= n >= 1");
  CounterRng rng(seed, 0x414e4c59ULL, index);  // "ANLY"
  const Eigen::MatrixXd A = rng.normal_matrix(m, n);
  const Eigen::VectorXd x_target = rng.normal_vector(n);
  const Eigen::VectorXd mu = rng.normal_vector(n);
  return make_instance(A, A * x_target, mu);
}

inline ConstraintSet instance_constraints(const GaussianLinearInstance& inst) {
  ConstraintSet set;
  for (int r = 0; r < inst.m; ++r) {
    std::vector<AffineTerm> terms;
    terms.reserve(static_cast<std::size_t>(inst.n));
    for (int c = 0; c < inst.n; ++c) terms.push_back({0, c, inst.A(r, c)});
    set.constraints.push_back(
        affine_equality_constraint(std::move(terms), inst.y[r], /*threshold=*/0.0));
  }
  return set;
}

// Spectral norm via power iteration on M^T M; deterministic start vector.
inline double spectral_norm(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0.0;
  const Eigen::MatrixXd G = M.transpose() * M;
  const Eigen::Index n = G.rows();
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v[i] = 1.0 + static_cast<double>(i) / static_cast<double>(2 * n);
  v.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 2000; ++it) {
    Eigen::VectorXd w = G * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    w /= nw;
    const double next = w.dot(G * w);
    const bool settled = std::abs(next - lambda) <= 1e-14 * std::max(1.0, std::abs(next));
    v = std::move(w);
    lambda = next;
    if (settled && it > 2) break;
  }
  return std::sqrt(std::max(0.0, lambda));
}

// The four matrices of the rearranged constrained update
//   z_{t-1} = K_t z_t + E_t mu - F_t mu
//             + gamma sqrt(ab_{t-1}) [I + gamma A^T A]^{-1} A^T A x_star.
struct StepMatrices {
  Eigen::MatrixXd K, E, F, D;
  Eigen::MatrixXd inv;  // [I + gamma A^T A]^{-1}
  double gamma = 0.0;
};

inline StepMatrices step_matrices(const GaussianLinearInstance& inst,
                                  const Schedule& sched, double gamma, int t) {
  const double ab_t = sched.alpha_bar_at(t);
  const double ab_p = sched.alpha_bar_at(t - 1);
  const Eigen::MatrixXd AtA = inst.A.transpose() * inst.A;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(inst.n, inst.n);
  StepMatrices sm;
  sm.gamma = gamma;
  sm.inv = (I + gamma * AtA).llt().solve(I);
  const double root_cross = std::sqrt((1.0 - ab_p) * (1.0 - ab_t));
  sm.K = std::sqrt(ab_p * ab_t) * sm.inv + root_cross * I;
  sm.E = (1.0 - ab_t) * std::sqrt(ab_p) * sm.inv;
  sm.F = root_cross * std::sqrt(ab_t) * I;
  sm.D = gamma * std::sqrt(ab_p) * sm.inv * AtA - I;
  return sm;
}

struct NormReport {
  std::vector<double> K_norms, E_norms, F_norms, D_norms;  // index t-1 holds step t
  double lambda_k = 0.0;  // max over t of ||K_t|| (diagnostic only)
  double measured_error = 0.0;
  double bound = 0.0;
};

// Evaluates every per-step matrix norm and enforces the contraction facts:
// ||K_t||, ||E_t||, ||F_t|| < 1 for gamma > 0; ||D_t|| < 1 additionally
// requires gamma > 2 / lambda_min and is only enforced there; ||F_1|| is
// exactly zero.
inline NormReport norm_checks(const GaussianLinearInstance& inst, const Schedule& sched,
                              const std::function<double(int)>& gamma_fn) {
  NormReport report;
  auto fail = [](int t, const char* which, double value) {
    std::ostringstream os;
    os << "norm check failed at t=" << t << ": ||" << which << "|| = " << value;
    throw NumericalError(os.str());
  };
  for (int t = 1; t <= sched.steps; ++t) {
    const double gamma = gamma_fn(t);
    if (!(gamma > 0.0))
      throw std::invalid_argument("norm_checks: gamma must be positive");
    const StepMatrices sm = step_matrices(inst, sched, gamma, t);
    const double nk = spectral_norm(sm.K);
    const double ne = spectral_norm(sm.E);
    const double nf = spectral_norm(sm.F);
    const double nd = spectral_norm(sm.D);
    if (!(nk < 1.0)) fail(t, "K", nk);
    if (!(ne < 1.0)) fail(t, "E", ne);
    if (!(nf < 1.0)) fail(t, "F", nf);
    if (gamma > 2.0 / inst.lambda_min && !(nd < 1.0)) fail(t, "D", nd);
    if (t == 1 && nf != 0.0) fail(t, "F", nf);
    report.K_norms.push_back(nk);
    report.E_norms.push_back(ne);
    report.F_norms.push_back(nf);
    report.D_norms.push_back(nd);
    report.lambda_k = std::max(report.lambda_k, nk);
  }
  return report;
}

enum class HarnessScheduleKind { linear_alpha_bar };

// Runs the constrained sampler end to end in the closed-form setting and
// checks the terminal-error bound
//   ||x_gen - x_star|| <= (sqrt(ab_1) / k) (||x_star|| + ||mu||).
inline NormReport verify_theorem2(const GaussianLinearInstance& inst, int T, double k,
                                  HarnessScheduleKind kind = HarnessScheduleKind::linear_alpha_bar,
                                  std::uint64_t seed = 0) {
  if (!(k > 1.0))
    throw std::invalid_argument("verify_theorem2: requires k > 1");
  if (kind != HarnessScheduleKind::linear_alpha_bar)
    throw std::invalid_argument("verify_theorem2: unknown schedule kind");
  const Schedule sched = harness_schedule(T);

  TimeSeries mu_series = unflatten(inst.mu, 1, inst.n);
  GaussianDenoiser denoiser(std::move(mu_series), sched);

  SamplerConfig cfg;
  cfg.schedule = sched;
  cfg.eta = 0.0;
  cfg.seed = seed;
  cfg.gamma_fn = [&](int t) { return theorem2_penalty(t, T, k, inst.lambda_min); };
  cfg.projection.use_closed_form = true;

  const ConstraintSet set = instance_constraints(inst);
  const SampleReport run = cps_sample(denoiser, set, cfg);
  const Eigen::VectorXd x_gen = flatten(run.sample);

  NormReport report;
  report.measured_error = (x_gen - inst.x_star).norm();
  report.bound =
      (std::sqrt(sched.alpha_bar_at(1)) / k) * (inst.x_star.norm() + inst.mu.norm());
  if (!(report.measured_error <= report.bound)) {
    std::ostringstream os;
    os << "terminal-error bound violated: n=" << inst.n << " m=" << inst.m
       << " k=" << k << " T=" << T << " measured=" << report.measured_error
       << " bound=" << report.bound << " lambda_min=" << inst.lambda_min;
    throw NumericalError(os.str());
  }
  return report;
}

struct SweepRow {
  int instance_id = 0;
  int n = 0;
  int m = 0;
  double k = 0.0;
  int T = 0;
  double measured = 0.0;
  double bound = 0.0;
};

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "instance,n,m,k,T,measured,bound,margin\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.17g,%d,%.17g,%.17g,%.17g\n",
                  r.instance_id, r.n, r.m, r.k, r.T, r.measured, r.bound,
                  r.bound - r.measured);
    out << buf;
  }
}

}  // namespace tsdiff

#endif  // TSDIFF_ANALYSIS_HPP
