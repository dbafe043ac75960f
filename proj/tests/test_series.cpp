#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "tsdiff/rng.hpp"
#include "tsdiff/series.hpp"

using namespace tsdiff;

namespace {

TimeSeries make_series(std::initializer_list<double> vals) {
  TimeSeries ts(1, static_cast<int>(vals.size()));
  int u = 0;
  for (double v : vals) ts.values(0, u++) = v;
  return ts;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("unit sinusoid on four points") {
  const TimeSeries w = waveform(/*amp=*/0.5, /*phase=*/0.0, /*freq=*/1, /*horizon=*/4);
  REQUIRE(w.channels() == 1);
  REQUIRE(w.horizon() == 4);
  REQUIRE_THAT(w.values(0, 0), Catch::Matchers::WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(w.values(0, 1), Catch::Matchers::WithinAbs(0.5, 1e-15));
  REQUIRE_THAT(w.values(0, 2), Catch::Matchers::WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(w.values(0, 3), Catch::Matchers::WithinAbs(-0.5, 1e-15));
}

TEST_CASE("waveform phase shifts and scales as written") {
  const TimeSeries w = waveform(0.3, M_PI / 2.0, 2, 8);
  for (int u = 0; u < 8; ++u)
    REQUIRE_THAT(w.values(0, u),
                 Catch::Matchers::WithinAbs(0.3 * std::cos(2.0 * M_PI * 2 * u / 8.0), 1e-14));
}

TEST_CASE("waveform generator rejects bad amplitude ranges") {
  REQUIRE_THROWS_AS(generate_waveforms(10, 24, 0.0, 0.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_waveforms(10, 24, -0.5, 0.5, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_waveforms(10, 24, 0.8, 0.2, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_waveforms(10, 24, 0.5, 1.5, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_waveforms(0, 24, 0.1, 1.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(generate_waveforms(10, 2, 0.1, 1.0, 1), std::invalid_argument);
}

TEST_CASE("waveform generator is deterministic and bounded") {
  const Dataset a = generate_waveforms(30, 48, 0.1, 1.0, 77);
  const Dataset b = generate_waveforms(30, 48, 0.1, 1.0, 77);
  const Dataset c = generate_waveforms(30, 48, 0.1, 1.0, 78);
  REQUIRE(a.count() == 30);
  bool any_diff = false;
  for (int i = 0; i < 30; ++i) {
    REQUIRE(a.samples[i].values == b.samples[i].values);
    if (a.samples[i].values != c.samples[i].values) any_diff = true;
    REQUIRE(a.samples[i].values.cwiseAbs().maxCoeff() <= 1.0);
  }
  REQUIRE(any_diff);
}

TEST_CASE("generated frequencies are whole cycles") {
  // Integer frequencies below Nyquist make every sampled sinusoid sum to
  // (numerically) zero over the horizon.
  const Dataset ds = generate_waveforms(50, 32, 0.1, 1.0, 5);
  for (const auto& s : ds.samples)
    REQUIRE_THAT(s.values.row(0).mean(), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("flatten is channel-major and unflatten inverts it") {
  TimeSeries ts(2, 3);
  ts.values << 1, 2, 3, 4, 5, 6;
  const Eigen::VectorXd flat = flatten(ts);
  REQUIRE(flat.size() == 6);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(flat[i] == ts.values(0, i));
    REQUIRE(flat[3 + i] == ts.values(1, i));
  }
  const TimeSeries back = unflatten(flat, 2, 3);
  REQUIRE(back.values == ts.values);
  REQUIRE_THROWS_AS(unflatten(flat, 2, 4), std::invalid_argument);
}

TEST_CASE("normalization of (1,2,3) gives the symmetric unit-variance triple") {
  Dataset ds;
  ds.samples.push_back(make_series({1.0, 2.0, 3.0}));
  const Dataset norm = normalize(ds);
  const double s = std::sqrt(1.5);  // 1/sqrt(population variance 2/3)
  REQUIRE_THAT(norm.samples[0].values(0, 0), Catch::Matchers::WithinAbs(-s, 1e-12));
  REQUIRE_THAT(norm.samples[0].values(0, 1), Catch::Matchers::WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(norm.samples[0].values(0, 2), Catch::Matchers::WithinAbs(s, 1e-12));
  REQUIRE(norm.normalization.has_value());
  REQUIRE_THAT(norm.normalization->mean[0], Catch::Matchers::WithinAbs(2.0, 1e-15));
  REQUIRE_THAT(norm.normalization->std[0],
               Catch::Matchers::WithinAbs(std::sqrt(2.0 / 3.0), 1e-15));

  const Dataset back = denormalize(norm);
  for (int u = 0; u < 3; ++u)
    REQUIRE_THAT(back.samples[0].values(0, u),
                 Catch::Matchers::WithinAbs(ds.samples[0].values(0, u), 1e-12));
}

TEST_CASE("normalized datasets have zero mean and unit variance per channel") {
  Dataset ds = generate_waveforms(40, 24, 0.2, 0.9, 3);
  for (auto& s : ds.samples) s.values.array() += 0.37;  // break the zero mean
  const Dataset norm = normalize(ds);
  double sum = 0.0, sumsq = 0.0;
  const double n = 40.0 * 24.0;
  for (const auto& s : norm.samples) {
    sum += s.values.sum();
    sumsq += s.values.array().square().sum();
  }
  REQUIRE_THAT(sum / n, Catch::Matchers::WithinAbs(0.0, 1e-9));
  REQUIRE_THAT(sumsq / n, Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("constant channels cannot be normalized and the error names them") {
  Dataset ds;
  TimeSeries ts(2, 4);
  ts.values.row(0) << 1, 2, 3, 4;
  ts.values.row(1).setConstant(5.0);
  ds.samples.push_back(ts);
  REQUIRE_THROWS_WITH(normalize(ds), Catch::Matchers::ContainsSubstring("channel 1"));
}

TEST_CASE("empty dataset is rejected by normalization") {
  REQUIRE_THROWS_AS(normalize(Dataset{}), std::invalid_argument);
  REQUIRE_THROWS_AS(denormalize(Dataset{}), std::invalid_argument);
}

TEST_CASE("normalization records round-trip through disk") {
  Normalization rec;
  rec.mean = Eigen::VectorXd(2);
  rec.std = Eigen::VectorXd(2);
  rec.mean << 0.1, -2.5;
  rec.std << 1.75, 0.003;
  TempFile tmp("norm_roundtrip_test.cfg");
  save_normalization(rec, tmp.path);
  const Normalization back = load_normalization(tmp.path);
  REQUIRE(back.mean == rec.mean);
  REQUIRE(back.std == rec.std);
}

TEST_CASE("csv round trip is bit exact for awkward doubles") {
  Dataset ds;
  TimeSeries a(2, 3);
  a.values << 0.1, -1.0 / 3.0, M_PI, 1e-300, -0.0, 123456789.123456789;
  TimeSeries b(2, 3);
  b.values << 1, 2, 3, 4, 5, 4.9406564584124654e-324;
  ds.samples.push_back(a);
  ds.samples.push_back(b);
  TempFile tmp("csv_roundtrip_test.csv");
  write_csv(ds, tmp.path);
  const Dataset back = read_csv(tmp.path);
  REQUIRE(back.count() == 2);
  REQUIRE(back.channels() == 2);
  REQUIRE(back.horizon() == 3);
  for (int i = 0; i < 2; ++i)
    REQUIRE(back.samples[i].values == ds.samples[i].values);
}

TEST_CASE("csv reader skips one header row") {
  TempFile tmp("csv_header_test.csv");
  {
    std::ofstream out(tmp.path);
    out << "ch1,ch2\n1.5,2.5\n3.5,4.5\n";
  }
  const Dataset ds = read_csv(tmp.path);
  REQUIRE(ds.count() == 1);
  REQUIRE(ds.channels() == 2);
  REQUIRE(ds.horizon() == 2);
  REQUIRE(ds.samples[0].values(1, 1) == 4.5);
}

TEST_CASE("csv errors carry the file location") {
  TempFile ragged("csv_ragged_test.csv");
  {
    std::ofstream out(ragged.path);
    out << "1,2\n3,4\n5,6,7\n";
  }
  REQUIRE_THROWS_WITH(read_csv(ragged.path), Catch::Matchers::ContainsSubstring("line 3"));

  TempFile garbage("csv_garbage_test.csv");
  {
    std::ofstream out(garbage.path);
    out << "1,2\n3,oops\n";
  }
  REQUIRE_THROWS_WITH(read_csv(garbage.path),
                      Catch::Matchers::ContainsSubstring("line 2") &&
                          Catch::Matchers::ContainsSubstring("column 2"));
}

TEST_CASE("csv rejects empty files, missing files and shape drift") {
  TempFile empty("csv_empty_test.csv");
  { std::ofstream out(empty.path); }
  REQUIRE_THROWS_AS(read_csv(empty.path), std::invalid_argument);
  REQUIRE_THROWS_AS(read_csv("no/such/file.csv"), std::invalid_argument);

  TempFile drift("csv_drift_test.csv");
  {
    std::ofstream out(drift.path);
    out << "1,2\n3,4\n\n5,6\n";  // second sample has a shorter horizon
  }
  REQUIRE_THROWS_AS(read_csv(drift.path), std::invalid_argument);
}

TEST_CASE("forward noising at alpha_bar = 0.25") {
  Eigen::VectorXd ab(2);
  ab << 1.0, 0.25;
  const Schedule s = schedule_from_alpha_bar(ab);
  const TimeSeries z0 = make_series({2.0});
  const TimeSeries eps = make_series({1.0});
  const TimeSeries zt = forward_noise(z0, 1, s, eps);
  // 0.5 * 2 + sqrt(0.75) * 1
  REQUIRE_THAT(zt.values(0, 0),
               Catch::Matchers::WithinAbs(1.0 + std::sqrt(0.75), 1e-15));
  REQUIRE_THAT(zt.values(0, 0), Catch::Matchers::WithinAbs(1.8660254037844386, 1e-15));
}

TEST_CASE("forward noising at the schedule boundaries") {
  // alpha_bar = 1 passes the sample through; alpha_bar = 0 returns the noise.
  Schedule ident;
  ident.steps = 1;
  ident.beta = Eigen::VectorXd::Constant(1, 0.5);
  ident.alpha_bar = Eigen::VectorXd::Ones(2);
  ident.sigma = Eigen::VectorXd::Zero(1);
  const TimeSeries z0 = make_series({2.0, -3.0, 0.25});
  const TimeSeries eps = make_series({1.0, 1.0, -1.0});
  REQUIRE(forward_noise(z0, 1, ident, eps).values == z0.values);

  const Schedule hs = harness_schedule(5);
  REQUIRE(forward_noise(z0, 5, hs, eps).values == eps.values);

  REQUIRE_THROWS_AS(forward_noise(z0, 0, hs, eps), std::invalid_argument);
  REQUIRE_THROWS_AS(forward_noise(z0, 6, hs, eps), std::invalid_argument);
  const TimeSeries short_eps = make_series({1.0});
  REQUIRE_THROWS_AS(forward_noise(z0, 1, hs, short_eps), std::invalid_argument);
}

TEST_CASE("forward noising inverts to the driving noise away from the endpoint") {
  CounterRng rng(31, 0, 0);
  for (double ab_t : {1e-6, 1e-3, 0.5, 1.0 - 1e-6}) {
    Eigen::VectorXd ab(2);
    ab << 1.0, ab_t;
    const Schedule s = schedule_from_alpha_bar(ab);
    TimeSeries z0(1, 16), eps(1, 16);
    z0.values = rng.normal_matrix(1, 16);
    eps.values = rng.normal_matrix(1, 16);
    const TimeSeries zt = forward_noise(z0, 1, s, eps);
    const Eigen::MatrixXd implied =
        (zt.values - std::sqrt(ab_t) * z0.values) / std::sqrt(1.0 - ab_t);
    REQUIRE((implied - eps.values).norm() <= 1e-10 * eps.values.norm());
  }
}

TEST_CASE("shape and finiteness guards") {
  TimeSeries good = make_series({1.0, 2.0});
  TimeSeries bad = good;
  bad.values(0, 1) = std::nan("");
  REQUIRE(is_finite(good));
  REQUIRE_FALSE(is_finite(bad));
  REQUIRE_THROWS_WITH(require_finite(bad, "ctx"), Catch::Matchers::ContainsSubstring("ctx"));
  TimeSeries other(2, 2);
  REQUIRE_THROWS_AS(require_same_shape(good, other, "ctx"), std::invalid_argument);
}
