#include <catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "tsdiff/constraints.hpp"
#include "tsdiff/metrics.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/series.hpp"

using namespace tsdiff;

namespace {

TimeSeries row_series(std::initializer_list<double> vals) {
  TimeSeries ts(1, static_cast<int>(vals.size()));
  int u = 0;
  for (double v : vals) ts.values(0, u++) = v;
  return ts;
}

// Independent alignment-cost oracle: enumerate every monotone alignment path
// explicitly and take the cheapest, instead of running the rolling recurrence.
double dtw_by_enumeration(const TimeSeries& a, const TimeSeries& b) {
  const int la = a.horizon();
  const int lb = b.horizon();
  auto cell = [&](int i, int j) { return (a.values.col(i) - b.values.col(j)).norm(); };
  double best = std::numeric_limits<double>::infinity();
  std::function<void(int, int, double)> walk = [&](int i, int j, double acc) {
    acc += cell(i, j);
    if (acc >= best) return;
    if (i == la - 1 && j == lb - 1) {
      best = acc;
      return;
    }
    if (i + 1 < la && j + 1 < lb) walk(i + 1, j + 1, acc);
    if (i + 1 < la) walk(i + 1, j, acc);
    if (j + 1 < lb) walk(i, j + 1, acc);
  };
  walk(0, 0, 0.0);
  return best;
}

}  // namespace

TEST_CASE("alignment cost on hand-checked pairs") {
  REQUIRE(dtw(row_series({0.0}), row_series({3.0})) == 3.0);
  REQUIRE(dtw(row_series({0.0, 0.0}), row_series({3.0})) == 6.0);
  const TimeSeries a = row_series({0.5, -1.0, 2.0, 0.25});
  REQUIRE(dtw(a, a) == 0.0);
}

TEST_CASE("alignment cost matches exhaustive path enumeration") {
  CounterRng rng(515, 0, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const int K = 1 + static_cast<int>(rng.uniform_int(0, 1));
    const int la = 1 + static_cast<int>(rng.uniform_int(0, 5));
    const int lb = 1 + static_cast<int>(rng.uniform_int(0, 5));
    TimeSeries a(K, la), b(K, lb);
    a.values = rng.normal_matrix(K, la);
    b.values = rng.normal_matrix(K, lb);
    const double fast = dtw(a, b);
    const double slow = dtw_by_enumeration(a, b);
    REQUIRE_THAT(fast, Catch::Matchers::WithinAbs(slow, 1e-12));
    REQUIRE_THAT(dtw(b, a), Catch::Matchers::WithinAbs(fast, 1e-12));
  }
}

TEST_CASE("alignment cost input guards") {
  TimeSeries two(2, 3);
  two.values.setZero();
  REQUIRE_THROWS_AS(dtw(two, row_series({1.0})), std::invalid_argument);
  REQUIRE_THROWS_AS(dtw(TimeSeries{}, TimeSeries{}), std::invalid_argument);
}

TEST_CASE("structural similarity of a series with itself is exactly one") {
  CounterRng rng(99, 0, 0);
  TimeSeries a(2, 24);
  a.values = rng.normal_matrix(2, 24);
  REQUIRE(ssim_1d(a, a) == 1.0);
  REQUIRE(ssim_1d(a, a, 1) == 1.0);
  REQUIRE(ssim_1d(a, a, 23) == 1.0);
}

TEST_CASE("structural similarity stays within the unit range") {
  CounterRng rng(123, 0, 0);
  for (int trial = 0; trial < 20; ++trial) {
    TimeSeries a(1, 16), b(1, 16);
    a.values = rng.normal_matrix(1, 16);
    b.values = rng.normal_matrix(1, 16);
    const double s = ssim_1d(a, b);
    REQUIRE(s <= 1.0 + 1e-12);
    REQUIRE(s >= -1.0 - 1e-12);
  }
}

TEST_CASE("opposite fluctuations around a shared level score negative") {
  // Same local mean, perfectly anti-correlated wiggle: the structure factor is
  // close to -1 while the level factor stays near +1.
  TimeSeries a(1, 32);
  for (int u = 0; u < 32; ++u) a.values(0, u) = 0.5 + (u % 2 == 0 ? 0.3 : -0.3);
  TimeSeries b(1, 32);
  b.values = (1.0 - a.values.array()).matrix();
  REQUIRE(ssim_1d(a, b) < -0.5);
}

TEST_CASE("constant pairs follow the closed-form similarity") {
  const double c1 = 0.3, c2 = 0.7;
  TimeSeries a(1, 20), b(1, 20);
  a.values.setConstant(c1);
  b.values.setConstant(c2);
  const double expect = (2.0 * c1 * c2 + 1e-4) / (c1 * c1 + c2 * c2 + 1e-4);
  REQUIRE_THAT(ssim_1d(a, b), Catch::Matchers::WithinRel(expect, 1e-9));
  REQUIRE_THAT(ssim_1d(a, b, 5), Catch::Matchers::WithinRel(expect, 1e-9));
}

TEST_CASE("similarity window validation") {
  TimeSeries a(1, 8);
  a.values.setZero();
  REQUIRE_THROWS_AS(ssim_1d(a, a, 4), std::invalid_argument);   // even
  REQUIRE_THROWS_AS(ssim_1d(a, a, 9), std::invalid_argument);   // > horizon
  REQUIRE_THROWS_AS(ssim_1d(a, a, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(ssim_1d(a, a, -3), std::invalid_argument);
  TimeSeries other(1, 9);
  other.values.setZero();
  REQUIRE_THROWS_AS(ssim_1d(a, other), std::invalid_argument);  // shape mismatch
}

TEST_CASE("violation statistics over a small batch") {
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 0.0));
  auto constant = [](double v) {
    TimeSeries ts(1, 4);
    ts.values.setConstant(v);
    return ts;
  };
  // Means 0.005 (inside the 0.01 budget), 0.5 (excess 0.49), -0.02 (excess 0.01).
  const std::vector<TimeSeries> samples{constant(0.005), constant(0.5), constant(-0.02)};
  const ViolationStats vs = violation_stats(samples, set);
  REQUIRE_THAT(vs.rate, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-15));
  REQUIRE_THAT(vs.magnitude, Catch::Matchers::WithinAbs(0.5 / 3.0, 1e-12));
  REQUIRE_THROWS_AS(violation_stats({}, set), std::invalid_argument);
}

TEST_CASE("per-channel summary features of a short ramp") {
  const Eigen::VectorXd f = detail::summary_features(row_series({1.0, 2.0, 3.0}));
  REQUIRE(f.size() == 6);
  REQUIRE_THAT(f[0], Catch::Matchers::WithinAbs(2.0, 1e-15));            // mean
  REQUIRE_THAT(f[1], Catch::Matchers::WithinAbs(std::sqrt(2.0 / 3.0), 1e-15));
  REQUIRE(f[2] == 1.0);                                                  // min
  REQUIRE(f[3] == 3.0);                                                  // max
  REQUIRE_THAT(f[4], Catch::Matchers::WithinAbs(0.0, 1e-15));            // lag-1 acf
  REQUIRE_THAT(f[5], Catch::Matchers::WithinAbs(1.0, 1e-15));            // mean |step|
  // Degenerate channels produce a zero autocorrelation, not a NaN.
  const Eigen::VectorXd g = detail::summary_features(row_series({2.0, 2.0, 2.0}));
  REQUIRE(g[4] == 0.0);
  REQUIRE(g[1] == 0.0);
}

TEST_CASE("feature distance of a cloud to itself is negligible") {
  const Dataset ds = generate_waveforms(40, 24, 0.1, 1.0, 6);
  REQUIRE(feature_frechet(ds, ds) <= 1e-6);
}

TEST_CASE("feature distance separates shifted clouds and is symmetric") {
  const Dataset real = generate_waveforms(40, 24, 0.1, 1.0, 6);
  Dataset shifted = real;
  for (auto& s : shifted.samples) s.values.array() += 0.5;
  const double fd = feature_frechet(real, shifted);
  REQUIRE(fd >= 0.25 - 1e-9);  // at least the squared mean-feature shift

  const Dataset gen = generate_waveforms(40, 24, 0.3, 0.8, 7);
  const double ab = feature_frechet(real, gen);
  const double ba = feature_frechet(gen, real);
  REQUIRE(ab >= 0.0);
  REQUIRE_THAT(ab, Catch::Matchers::WithinAbs(ba, 1e-6));
}

TEST_CASE("feature distance input guards") {
  const Dataset ds = generate_waveforms(10, 16, 0.1, 1.0, 3);
  Dataset one;
  one.samples.push_back(ds.samples[0]);
  REQUIRE_THROWS_AS(feature_frechet(one, ds), std::invalid_argument);
  REQUIRE_THROWS_AS(feature_frechet(ds, one), std::invalid_argument);

  Dataset wide;
  for (int i = 0; i < 3; ++i) {
    TimeSeries ts(2, 16);
    ts.values.setConstant(i);
    wide.samples.push_back(ts);
  }
  REQUIRE_THROWS_AS(feature_frechet(ds, wide), std::invalid_argument);
}

TEST_CASE("metric report serialization carries every field") {
  MetricReport r;
  r.dtw = 1.5;
  r.ssim = 0.25;
  r.violation_rate = 0.1;
  r.violation_magnitude = 0.05;
  r.feature_fd = 2.0;
  r.real_count = 10;
  r.gen_count = 20;
  const nlohmann::json j = metric_report_to_json(r);
  REQUIRE(j.at("dtw").get<double>() == 1.5);
  REQUIRE(j.at("ssim").get<double>() == 0.25);
  REQUIRE(j.at("violation_rate").get<double>() == 0.1);
  REQUIRE(j.at("violation_magnitude").get<double>() == 0.05);
  REQUIRE(j.at("feature_fd").get<double>() == 2.0);
  REQUIRE(j.at("real_count").get<long>() == 10);
  REQUIRE(j.at("gen_count").get<long>() == 20);
}
