#ifndef TSDIFF_PROJECTION_HPP
#define TSDIFF_PROJECTION_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/QR>

#include "tsdiff/constraints.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/series.hpp"

namespace tsdiff {

struct ProjectionConfig {
  int max_iterations = 500;
  double grad_tolerance = 1e-8;
  enum class StepRule { fixed_lipschitz, backtracking };
  StepRule step_rule = StepRule::backtracking;
  double sufficient_decrease = 1e-4;
  std::optional<double> lipschitz_estimate;
  // Delegate zero-threshold equality-only systems to the closed form.
  bool use_closed_form = true;
  // Seed descent with an exact polyhedron projection when the start is
  // infeasible, gamma is large and the system is small.
  bool use_active_set = true;
  double active_set_gamma = 1e4;
  int active_set_max_rows = 64;
  bool record_trace = false;
};

struct ProjectionResult {
  TimeSeries z_pr;
  double objective = 0.0;
  int iterations = 0;
  double residual_violation = 0.0;
  bool converged = false;
  std::vector<double> trace;  // objective per iteration (including the start)
};

// Minimizer of 0.5*(||z - z_hat||^2 + gamma*||A z - b||^2) for an
// equality-only system, via the SPD solve (I + gamma A^T A) z = z_hat +
// gamma A^T b.
inline Eigen::VectorXd closed_form_affine_eq(const Eigen::VectorXd& z_hat,
                                             const AffineSystem& sys, double gamma) {
  if (!sys.equality_only())
    throw std::invalid_argument("closed_form_affine_eq: system has non-equality rows");
  if (!std::isfinite(gamma)) throw NumericalError("closed_form_affine_eq: non-finite gamma");
  if (!(gamma >= 0.0)) throw std::invalid_argument("closed_form_affine_eq: gamma must be >= 0");
  if (sys.cols() != z_hat.size())
    throw std::invalid_argument("closed_form_affine_eq: dimension mismatch");
  const Eigen::Index n = z_hat.size();
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n);
  M.noalias() += gamma * (sys.A.transpose() * sys.A);
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success)
    throw NumericalError("closed_form_affine_eq: factorization failed");
  const Eigen::VectorXd rhs = z_hat + gamma * (sys.A.transpose() * sys.b);
  Eigen::VectorXd z = llt.solve(rhs);
  if (!z.allFinite()) throw NumericalError("closed_form_affine_eq: non-finite solution");
  return z;
}

inline TimeSeries closed_form_affine_eq(const TimeSeries& z_hat, const AffineSystem& sys,
                                        double gamma) {
  return unflatten(closed_form_affine_eq(flatten(z_hat), sys, gamma), z_hat.channels(),
                   z_hat.horizon());
}

namespace detail {

// Penalty minimized by the iterative solver: squared residuals for
// zero-threshold equality rows (so the closed form solves the same problem),
// hinge terms for thresholded equalities and inequalities.
struct PenaltyModel {
  const AffineSystem& sys;

  double value(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd r = sys.A * z - sys.b;
    double total = 0.0;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (sys.is_equality[i]) {
        if (sys.row_threshold[i] == 0.0)
          total += r[i] * r[i];
        else
          total += hinge(std::abs(r[i]) - sys.row_threshold[i]);
      } else {
        total += hinge(r[i]);
      }
    }
    return total;
  }

  Eigen::VectorXd subgradient(const Eigen::VectorXd& z) const {
    const Eigen::VectorXd r = sys.A * z - sys.b;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(z.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (sys.is_equality[i]) {
        if (sys.row_threshold[i] == 0.0)
          g += 2.0 * r[i] * sys.A.row(i).transpose();
        else if (std::abs(r[i]) > sys.row_threshold[i])
          g += (r[i] > 0.0 ? 1.0 : -1.0) * sys.A.row(i).transpose();
      } else if (r[i] > 0.0) {
        g += sys.A.row(i).transpose();
      }
    }
    return g;
  }
};

// Lawson-Hanson nonnegative least squares: minimizes ||E u - f|| over u >= 0.
// Returns false if the iteration budget is exhausted (degenerate cycling).
inline bool nnls(const Eigen::MatrixXd& E, const Eigen::VectorXd& f, Eigen::VectorXd& u,
                 int max_iterations) {
  const Eigen::Index q = E.cols();
  u = Eigen::VectorXd::Zero(q);
  std::vector<char> passive(static_cast<std::size_t>(q), 0);
  Eigen::VectorXd w = E.transpose() * f;
  const double wtol =
      1e-11 * (1.0 + E.cwiseAbs().maxCoeff()) * (1.0 + f.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> idx;
  int iterations = 0;
  while (true) {
    Eigen::Index enter = -1;
    double best = wtol;
    for (Eigen::Index j = 0; j < q; ++j)
      if (!passive[static_cast<std::size_t>(j)] && w[j] > best) {
        best = w[j];
        enter = j;
      }
    if (enter < 0) return true;  // KKT: no remaining ascent coordinate
    passive[static_cast<std::size_t>(enter)] = 1;
    while (true) {
      if (++iterations > max_iterations) return false;
      idx.clear();
      for (Eigen::Index j = 0; j < q; ++j)
        if (passive[static_cast<std::size_t>(j)]) idx.push_back(j);
      Eigen::MatrixXd Ep(E.rows(), static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j)
        Ep.col(static_cast<Eigen::Index>(j)) = E.col(idx[j]);
      const Eigen::VectorXd v = Ep.colPivHouseholderQr().solve(f);
      bool interior = true;
      for (Eigen::Index j = 0; j < v.size(); ++j) interior = interior && v[j] > 0.0;
      if (interior) {
        u.setZero();
        for (std::size_t j = 0; j < idx.size(); ++j)
          u[idx[j]] = v[static_cast<Eigen::Index>(j)];
        break;
      }
      // Move toward the unconstrained solution until the first coordinate
      // hits zero, then release every coordinate that reached the boundary.
      double alpha = 1.0;
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const double vj = v[static_cast<Eigen::Index>(j)];
        if (vj <= 0.0) {
          const double uj = u[idx[j]];
          alpha = uj - vj > 0.0 ? std::min(alpha, uj / (uj - vj)) : 0.0;
        }
      }
      for (std::size_t j = 0; j < idx.size(); ++j)
        u[idx[j]] += alpha * (v[static_cast<Eigen::Index>(j)] - u[idx[j]]);
      const double drop_tol = 1e-14 * std::max(1.0, u.cwiseAbs().maxCoeff());
      for (std::size_t j = 0; j < idx.size(); ++j)
        if (v[static_cast<Eigen::Index>(j)] <= 0.0 && u[idx[j]] <= drop_tol) {
          u[idx[j]] = 0.0;
          passive[static_cast<std::size_t>(idx[j])] = 0;
        }
    }
    w = E.transpose() * (f - E * u);
  }
}

// Exact Euclidean projection onto the polyhedron {ineq rows <= b, equality
// rows within +-threshold}, via the least-distance reduction to nonnegative
// least squares. Returns nothing if the polyhedron is (numerically) empty or
// the inner solve cycles.
inline std::optional<Eigen::VectorXd> polyhedron_projection(const Eigen::VectorXd& z_hat,
                                                            const AffineSystem& sys) {
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < sys.A.rows(); ++i) {
    if (sys.is_equality[i]) {
      rows.push_back(sys.A.row(i).transpose());
      rhs.push_back(sys.b[i] + sys.row_threshold[i]);
      rows.push_back(-sys.A.row(i).transpose());
      rhs.push_back(-(sys.b[i] - sys.row_threshold[i]));
    } else {
      rows.push_back(sys.A.row(i).transpose());
      rhs.push_back(sys.b[i]);
    }
  }
  const Eigen::Index n = z_hat.size();
  const auto m = static_cast<Eigen::Index>(rows.size());
  if (m == 0) return z_hat;
  // In the shifted variable x = z - z_hat the rows read -a_i . x >= a_i . z_hat
  // - rhs_i, the least-distance form solved by one nonnegative least-squares
  // problem on the stacked [rows; offsets] matrix.
  Eigen::MatrixXd E(n + 1, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    E.col(i).head(n) = -rows[static_cast<std::size_t>(i)];
    E(n, i) = rows[static_cast<std::size_t>(i)].dot(z_hat) - rhs[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd f = Eigen::VectorXd::Zero(n + 1);
  f[n] = 1.0;
  Eigen::VectorXd u;
  if (!nnls(E, f, u, static_cast<int>(3 * m) + 30)) return std::nullopt;
  const Eigen::VectorXd r = E * u - f;
  if (r.norm() <= 1e-9 || !(r[n] < 0.0)) return std::nullopt;  // empty polyhedron
  Eigen::VectorXd z = z_hat - r.head(n) / r[n];
  if (!z.allFinite()) return std::nullopt;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    worst = std::max(worst,
                     rows[static_cast<std::size_t>(i)].dot(z) - rhs[static_cast<std::size_t>(i)]);
  if (!(worst <= 1e-7 * (1.0 + z.norm()))) return std::nullopt;
  return z;
}

}  // namespace detail

// Minimizes 0.5*(||z - z_hat||^2 + gamma * penalty(z)) by monotone first-order
// descent (adaptive step seeded by a Barzilai-Borwein estimate, halved until
// sufficient decrease). Equality-only zero-threshold systems short-circuit to
// the closed form unless disabled.
inline ProjectionResult project_system(const Eigen::VectorXd& z_hat, const AffineSystem& sys,
                                       double gamma, const ProjectionConfig& cfg,
                                       const Eigen::VectorXd* warm_start = nullptr) {
  if (!std::isfinite(gamma)) throw NumericalError("project: non-finite gamma");
  if (!(gamma >= 0.0)) throw std::invalid_argument("project: gamma must be >= 0");
  if (cfg.max_iterations < 1 || !(cfg.grad_tolerance > 0.0))
    throw std::invalid_argument("project: invalid solver configuration");
  if (sys.cols() != z_hat.size())
    throw std::invalid_argument("project: dimension mismatch");

  ProjectionResult res;
  auto finish = [&](Eigen::VectorXd z, double objective, int iterations, bool converged) {
    res.z_pr = unflatten(z, sys.channels, sys.horizon);
    res.objective = objective;
    res.iterations = iterations;
    res.residual_violation = affine_violation(z, sys);
    res.converged = converged;
    return res;
  };

  if (gamma == 0.0) return finish(z_hat, 0.0, 0, true);

  bool zero_thr_eq_only = sys.equality_only();
  for (Eigen::Index i = 0; zero_thr_eq_only && i < sys.row_threshold.size(); ++i)
    if (sys.row_threshold[i] != 0.0) zero_thr_eq_only = false;

  const detail::PenaltyModel penalty{sys};
  auto objective = [&](const Eigen::VectorXd& z) {
    return 0.5 * ((z - z_hat).squaredNorm() + gamma * penalty.value(z));
  };
  const double tol = cfg.grad_tolerance * std::max(1.0, z_hat.norm());

  // Minimal-norm subgradient of the objective at z. Rows sitting on a hinge
  // kink have a subdifferential coefficient free in [0, gamma/2]; the
  // box-constrained least-squares choice (solved by projected coordinate
  // descent) both measures stationarity and yields a descent direction that
  // holds settled kink rows in place -- the rows are affine, so steps along
  // the direction keep their residuals exactly constant instead of bouncing
  // across the kink.
  auto effective_gradient = [&](const Eigen::VectorXd& z) {
    const Eigen::VectorXd r = sys.A * z - sys.b;
    Eigen::VectorXd g0 = z - z_hat;
    std::vector<Eigen::Index> kinks;
    std::vector<double> signs;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      const double ktol = 1e-9 * (1.0 + std::abs(sys.b[i]));
      if (sys.is_equality[i]) {
        if (sys.row_threshold[i] == 0.0) {
          g0 += gamma * r[i] * sys.A.row(i).transpose();  // smooth squared term
        } else if (std::abs(std::abs(r[i]) - sys.row_threshold[i]) <= ktol) {
          kinks.push_back(i);
          signs.push_back(r[i] >= 0.0 ? 1.0 : -1.0);
        } else if (std::abs(r[i]) > sys.row_threshold[i]) {
          g0 += 0.5 * gamma * (r[i] > 0.0 ? 1.0 : -1.0) * sys.A.row(i).transpose();
        }
      } else if (std::abs(r[i]) <= ktol) {
        kinks.push_back(i);
        signs.push_back(1.0);
      } else if (r[i] > 0.0) {
        g0 += 0.5 * gamma * sys.A.row(i).transpose();
      }
    }
    if (kinks.empty()) return g0;
    const auto K = static_cast<Eigen::Index>(kinks.size());
    Eigen::MatrixXd C(z.size(), K);
    for (Eigen::Index j = 0; j < K; ++j)
      C.col(j) = signs[static_cast<std::size_t>(j)] *
                 sys.A.row(kinks[static_cast<std::size_t>(j)]).transpose();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(K);
    Eigen::VectorXd resid = g0;
    for (int sweep = 0; sweep < 200; ++sweep) {
      double change = 0.0;
      for (Eigen::Index j = 0; j < K; ++j) {
        const double cc = C.col(j).squaredNorm();
        if (cc == 0.0) continue;
        const double raw = theta[j] - C.col(j).dot(resid) / cc;
        const double next = std::min(std::max(raw, 0.0), 0.5 * gamma);
        if (next != theta[j]) {
          resid += (next - theta[j]) * C.col(j);
          change += std::abs(next - theta[j]);
          theta[j] = next;
        }
      }
      if (change <= 1e-15 * (1.0 + theta.cwiseAbs().maxCoeff())) break;
    }
    return resid;
  };

  if (cfg.use_closed_form && zero_thr_eq_only) {
    Eigen::VectorXd z = closed_form_affine_eq(z_hat, sys, gamma);
    const double obj = objective(z);
    return finish(std::move(z), obj, 0, true);
  }

  // Start from the best of: z_hat, the warm start, and (for steep penalties on
  // small systems) an exact polyhedron projection.
  Eigen::VectorXd z = z_hat;
  double fz = objective(z);
  if (warm_start && warm_start->size() == z_hat.size()) {
    const double fw = objective(*warm_start);
    if (fw < fz) {
      z = *warm_start;
      fz = fw;
    }
  }
  if (cfg.use_active_set && sys.rows() <= cfg.active_set_max_rows &&
      gamma >= cfg.active_set_gamma && penalty.value(z) > 0.0) {
    if (auto cand = detail::polyhedron_projection(z_hat, sys)) {
      const double fc = objective(*cand);
      if (fc < fz) {
        z = std::move(*cand);
        fz = fc;
      }
    }
  }

  if (cfg.record_trace) res.trace.push_back(fz);

  double lipschitz = 0.0;
  if (cfg.step_rule == ProjectionConfig::StepRule::fixed_lipschitz) {
    if (cfg.lipschitz_estimate) {
      lipschitz = *cfg.lipschitz_estimate;
    } else {
      // Power-iteration bound on the largest eigenvalue of A^T A.
      Eigen::VectorXd v = Eigen::VectorXd::Ones(z_hat.size()).normalized();
      double lam = 0.0;
      for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd w = sys.A.transpose() * (sys.A * v);
        lam = w.norm();
        if (lam == 0.0) break;
        v = w / lam;
      }
      lipschitz = 1.0 + gamma * lam;
    }
    if (!(lipschitz > 0.0)) throw std::invalid_argument("project: invalid Lipschitz estimate");
  }

  Eigen::VectorXd g = effective_gradient(z);
  bool converged = false;
  int used = 0;
  double step = cfg.step_rule == ProjectionConfig::StepRule::fixed_lipschitz
                    ? 1.0 / lipschitz
                    : 1.0 / (1.0 + gamma);
  Eigen::VectorXd prev_z, prev_g;
  bool have_prev = false;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    if (g.norm() <= tol) {
      converged = true;
      break;
    }
    double s = step;
    if (cfg.step_rule == ProjectionConfig::StepRule::backtracking && have_prev) {
      const Eigen::VectorXd dz = z - prev_z;
      const Eigen::VectorXd dg = g - prev_g;
      const double denom = dz.dot(dg);
      if (denom > 0.0) s = std::min(std::max(dz.squaredNorm() / denom, 1e-12), 1e6);
    }
    const double gg = g.squaredNorm();
    double fnew = std::numeric_limits<double>::infinity();
    Eigen::VectorXd znew;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      znew = z - s * g;
      fnew = objective(znew);
      if (std::isnan(fnew)) throw NumericalError("project: objective became NaN");
      if (fnew <= fz - cfg.sufficient_decrease * s * gg) {
        accepted = true;
        break;
      }
      s *= 0.5;
    }
    ++used;
    if (!accepted) {
      // The objective is convex, so failing to decrease along the current
      // subgradient even at machine-scale steps means the iterate sits at a
      // kink minimum (e.g. a threshold-band edge) where the one-sided
      // subgradient never vanishes. Report convergence rather than a stall.
      converged = true;
      break;
    }
    prev_z = z;
    prev_g = g;
    have_prev = true;
    const double moved = (znew - z).norm();
    z = std::move(znew);
    fz = fnew;
    g = effective_gradient(z);
    step = s;
    if (cfg.record_trace) res.trace.push_back(fz);
    if (moved <= 1e-14 * std::max(1.0, z.norm())) {
      // Accepted displacement at the resolution of double precision: on a
      // convex objective the iterate sits at a minimizer. This is the normal
      // exit at hinge kinks (threshold-band edges) where the one-sided
      // subgradient never falls below the gradient tolerance.
      converged = true;
      break;
    }
  }
  if (!converged) converged = g.norm() <= tol;
  return finish(std::move(z), fz, used, converged);
}

inline ProjectionResult project(const TimeSeries& z_hat, const AffineSystem& sys,
                                double gamma, const ProjectionConfig& cfg,
                                const TimeSeries* warm_start = nullptr) {
  const Eigen::VectorXd flat = flatten(z_hat);
  if (warm_start) {
    const Eigen::VectorXd warm = flatten(*warm_start);
    return project_system(flat, sys, gamma, cfg, &warm);
  }
  return project_system(flat, sys, gamma, cfg, nullptr);
}

inline ProjectionResult project(const TimeSeries& z_hat, const ConstraintSet& set,
                                double gamma, const ProjectionConfig& cfg,
                                const TimeSeries* warm_start = nullptr) {
  const AffineSystem sys = compile_affine(set, z_hat.channels(), z_hat.horizon());
  return project(z_hat, sys, gamma, cfg, warm_start);
}

}  // namespace tsdiff

#endif  // TSDIFF_PROJECTION_HPP
