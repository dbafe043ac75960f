#ifndef TSDIFF_METRICS_HPP
#define TSDIFF_METRICS_HPP

#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tsdiff/constraints.hpp"
#include "tsdiff/series.hpp"

#include <json.hpp>

namespace tsdiff {

// Classic dynamic-time-warping cost: per-cell cost is the Euclidean distance
// across channels, moves are match/insert/delete with unit weights, no
// window. Horizons may differ; channel counts must match. Returns the
// unnormalized optimal cumulative cost.
inline double dtw(const TimeSeries& a, const TimeSeries& b) {
  if (a.channels() != b.channels())
    throw std::invalid_argument("dtw: channel count mismatch");
  const int la = a.horizon();
  const int lb = b.horizon();
  if (la == 0 || lb == 0) throw std::invalid_argument("dtw: empty series");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> prev(static_cast<std::size_t>(lb) + 1, inf);
  std::vector<double> cur(static_cast<std::size_t>(lb) + 1, inf);
  prev[0] = 0.0;
  for (int i = 1; i <= la; ++i) {
    cur[0] = inf;
    for (int j = 1; j <= lb; ++j) {
      const double cost = (a.values.col(i - 1) - b.values.col(j - 1)).norm();
      cur[static_cast<std::size_t>(j)] =
          cost + std::min({prev[static_cast<std::size_t>(j - 1)],
                           prev[static_cast<std::size_t>(j)],
                           cur[static_cast<std::size_t>(j - 1)]});
    }
    std::swap(prev, cur);
  }
  return prev[static_cast<std::size_t>(lb)];
}

namespace detail {

// Uniform moving average with symmetric (edge-repeating) padding; the window
// is odd so the filter is centered.
inline Eigen::VectorXd uniform_filter(const Eigen::VectorXd& x, int window) {
  const int n = static_cast<int>(x.size());
  const int half = window / 2;
  auto at = [&](int i) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
    return x[i];
  };
  Eigen::VectorXd out(n);
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int o = -half; o <= half; ++o) s += at(i + o);
    out[i] = s / window;
  }
  return out;
}

}  // namespace detail

// Mean SSIM over all positions and channels, with local statistics from a
// centered uniform window. Defaults follow the usual small-constant choice
// C1=1e-4, C2=9e-4 and window 7.
inline double ssim_1d(const TimeSeries& a, const TimeSeries& b, int window = 7,
                      double C1 = 1e-4, double C2 = 9e-4) {
  require_same_shape(a, b, "ssim_1d");
  const int L = a.horizon();
  if (window < 1 || window > L || window % 2 == 0)
    throw std::invalid_argument("ssim_1d: window must be odd, >= 1 and <= horizon");
  double total = 0.0;
  long count = 0;
  for (int k = 0; k < a.channels(); ++k) {
    const Eigen::VectorXd xa = a.values.row(k).transpose();
    const Eigen::VectorXd xb = b.values.row(k).transpose();
    const Eigen::VectorXd mu_a = detail::uniform_filter(xa, window);
    const Eigen::VectorXd mu_b = detail::uniform_filter(xb, window);
    const Eigen::VectorXd raw_aa =
        detail::uniform_filter(xa.array().square().matrix(), window);
    const Eigen::VectorXd raw_bb =
        detail::uniform_filter(xb.array().square().matrix(), window);
    const Eigen::VectorXd raw_ab =
        detail::uniform_filter(xa.cwiseProduct(xb), window);
    for (int u = 0; u < L; ++u) {
      const double va = raw_aa[u] - mu_a[u] * mu_a[u];
      const double vb = raw_bb[u] - mu_b[u] * mu_b[u];
      const double cov = raw_ab[u] - mu_a[u] * mu_b[u];
      const double num = (2.0 * mu_a[u] * mu_b[u] + C1) * (2.0 * cov + C2);
      const double den = (mu_a[u] * mu_a[u] + mu_b[u] * mu_b[u] + C1) * (va + vb + C2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

struct ViolationStats {
  double rate = 0.0;       // fraction of samples exceeding the budget anywhere
  double magnitude = 0.0;  // mean over samples of the summed excess
};

inline ViolationStats violation_stats(const std::vector<TimeSeries>& samples,
                                      const ConstraintSet& set) {
  if (samples.empty()) throw std::invalid_argument("violation_stats: no samples");
  ViolationStats out;
  for (const auto& s : samples) {
    const Eigen::VectorXd v = per_constraint_violation(s, set);
    if ((v.array() > 0.0).any()) out.rate += 1.0;
    out.magnitude += v.sum();
  }
  out.rate /= static_cast<double>(samples.size());
  out.magnitude /= static_cast<double>(samples.size());
  return out;
}

namespace detail {

// Fixed per-channel summary features: mean, std, min, max, lag-1
// autocorrelation, mean absolute consecutive change. Keeping the list frozen
// makes distances comparable across runs.
inline Eigen::VectorXd summary_features(const TimeSeries& s) {
  const int K = s.channels();
  const int L = s.horizon();
  Eigen::VectorXd f(6 * K);
  for (int k = 0; k < K; ++k) {
    const auto row = s.values.row(k);
    const double mean = row.mean();
    const double var = (row.array() - mean).square().mean();
    double acf = 0.0;
    if (L > 1 && var > 0.0) {
      double num = 0.0;
      for (int u = 0; u + 1 < L; ++u) num += (row[u] - mean) * (row[u + 1] - mean);
      acf = num / (static_cast<double>(L) * var);
    }
    double macc = 0.0;
    if (L > 1) {
      for (int u = 0; u + 1 < L; ++u) macc += std::abs(row[u + 1] - row[u]);
      macc /= static_cast<double>(L - 1);
    }
    f[6 * k + 0] = mean;
    f[6 * k + 1] = std::sqrt(var);
    f[6 * k + 2] = row.minCoeff();
    f[6 * k + 3] = row.maxCoeff();
    f[6 * k + 4] = acf;
    f[6 * k + 5] = macc;
  }
  return f;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

struct FeatureCloud {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline FeatureCloud feature_cloud(const Dataset& ds) {
  const auto n = ds.count();
  Eigen::MatrixXd F(summary_features(ds.samples[0]).size(), n);
  for (Eigen::Index i = 0; i < n; ++i)
    F.col(i) = summary_features(ds.samples[static_cast<std::size_t>(i)]);
  FeatureCloud c;
  c.mean = F.rowwise().mean();
  const Eigen::MatrixXd centered = F.colwise() - c.mean;
  c.cov = centered * centered.transpose() / static_cast<double>(n);
  return c;
}

}  // namespace detail

// Gaussian Frechet distance between summary-feature clouds:
//   ||mu_r - mu_g||^2 + tr(S_r + S_g - 2 (S_r S_g)^{1/2}).
// The cross square root is evaluated through the symmetric product
// S_r^{1/2} S_g S_r^{1/2}, which shares its spectrum with S_r S_g. This is a
// fixed-feature stand-in for learned-encoder distances; magnitudes are only
// comparable within this codebase.
inline double feature_frechet(const Dataset& real, const Dataset& gen) {
  if (real.count() < 2 || gen.count() < 2)
    throw std::invalid_argument("feature_frechet: need >= 2 samples per side");
  require_uniform(real, "feature_frechet");
  require_uniform(gen, "feature_frechet");
  if (real.channels() != gen.channels())
    throw std::invalid_argument("feature_frechet: channel count mismatch");
  detail::FeatureCloud r = detail::feature_cloud(real);
  detail::FeatureCloud g = detail::feature_cloud(gen);
  const double jitter = 1e-6;
  auto min_eig = [](const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
  };
  if (min_eig(r.cov) < 1e-12 || min_eig(g.cov) < 1e-12) {
    std::cerr << "[metrics] near-singular feature covariance; adding " << jitter
              << " diagonal jitter\n";
    r.cov.diagonal().array() += jitter;
    g.cov.diagonal().array() += jitter;
  }
  const Eigen::MatrixXd sr = detail::psd_sqrt(r.cov);
  const Eigen::MatrixXd cross = detail::psd_sqrt(sr * g.cov * sr);
  const double fd = (r.mean - g.mean).squaredNorm() + r.cov.trace() + g.cov.trace() -
                    2.0 * cross.trace();
  return std::max(0.0, fd);
}

struct MetricReport {
  double dtw = 0.0;   // mean pairwise cost
  double ssim = 0.0;  // mean pairwise similarity
  double violation_rate = 0.0;
  double violation_magnitude = 0.0;
  double feature_fd = 0.0;
  long real_count = 0;
  long gen_count = 0;
};

inline nlohmann::json metric_report_to_json(const MetricReport& r) {
  return nlohmann::json{{"dtw", r.dtw},
                        {"ssim", r.ssim},
                        {"violation_rate", r.violation_rate},
                        {"violation_magnitude", r.violation_magnitude},
                        {"feature_fd", r.feature_fd},
                        {"real_count", r.real_count},
                        {"gen_count", r.gen_count}};
}

}  // namespace tsdiff

#endif  // TSDIFF_METRICS_HPP
