#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "tsdiff/constraints.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/sampler.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/series.hpp"

using namespace tsdiff;

namespace {

TimeSeries zeros(int channels, int horizon) {
  TimeSeries ts(channels, horizon);
  ts.values.setZero();
  return ts;
}

SamplerConfig base_config(const Schedule& s, std::uint64_t seed = 7) {
  SamplerConfig cfg;
  cfg.schedule = s;
  cfg.seed = seed;
  return cfg;
}

// A denoiser that always emits NaN, to exercise the finiteness guard.
struct NanDenoiser : Denoiser {
  Schedule sched = linear_schedule(5);
  TimeSeries predict_noise(const TimeSeries& z, int) const override {
    TimeSeries out(z.channels(), z.horizon());
    out.values.setConstant(std::numeric_limits<double>::quiet_NaN());
    return out;
  }
  int channels() const override { return 1; }
  int horizon() const override { return 4; }
  const Schedule& schedule() const override { return sched; }
};

}  // namespace

TEST_CASE("plain sampling is deterministic in seed and sample index") {
  const Schedule s = linear_schedule(20);
  LearnedDenoiser d(MlpSpec{1, 8, 16, 2, 4}, s, 3);
  const SampleReport a = ddim_sample(d, base_config(s, 7));
  const SampleReport b = ddim_sample(d, base_config(s, 7));
  REQUIRE(a.sample.values == b.sample.values);
  REQUIRE(a.steps == 20);
  REQUIRE(a.violation_total == 0.0);
  REQUIRE(a.per_constraint.size() == 0);
  REQUIRE(a.converged);

  const SampleReport other_seed = ddim_sample(d, base_config(s, 8));
  REQUIRE(a.sample.values != other_seed.sample.values);

  SamplerConfig idx_cfg = base_config(s, 7);
  idx_cfg.sample_index = 1;
  const SampleReport other_index = ddim_sample(d, idx_cfg);
  REQUIRE(a.sample.values != other_index.sample.values);
}

TEST_CASE("constrained sampler with projection disabled reproduces plain sampling") {
  const Schedule s = linear_schedule(25);
  LearnedDenoiser d(MlpSpec{2, 6, 16, 2, 4}, s, 12);
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 0.25));

  SamplerConfig cfg = base_config(s, 42);
  const SampleReport plain = ddim_sample(d, cfg);
  cfg.disable_projection = true;
  const SampleReport reduced = cps_sample(d, set, cfg);
  REQUIRE(plain.sample.values == reduced.sample.values);
  // The reduced run still evaluates the set on its output.
  REQUIRE(reduced.per_constraint.size() == 1);
}

TEST_CASE("zero-weight guidance matches plain sampling when nothing is overwritten") {
  const Schedule s = linear_schedule(15);
  LearnedDenoiser d(MlpSpec{1, 8, 16, 2, 4}, s, 9);
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 0.4));
  set.constraints.push_back(trend_constraint(0, 1, 5, +1));

  SamplerConfig cfg = base_config(s, 11);
  cfg.guidance_weight = 0.0;
  const SampleReport guided = guided_sample(d, set, cfg);
  const SampleReport plain = ddim_sample(d, cfg);
  REQUIRE(guided.sample.values == plain.sample.values);
}

TEST_CASE("guidance writes fixed values into the output exactly") {
  const Schedule s = linear_schedule(15);
  LearnedDenoiser d(MlpSpec{1, 8, 16, 2, 4}, s, 9);
  ConstraintSet set;
  set.constraints.push_back(value_at_constraint(0, 3, 0.75));
  set.constraints.push_back(mean_constraint(0, 0.1));

  SamplerConfig cfg = base_config(s, 5);
  cfg.guidance_weight = 1e-3;
  const SampleReport r = guided_sample(d, set, cfg);
  REQUIRE(r.sample.values(0, 3) == 0.75);
}

TEST_CASE("empty constraint sets are rejected up front") {
  const Schedule s = linear_schedule(5);
  LearnedDenoiser d(MlpSpec{1, 4, 8, 1, 4}, s, 1);
  const ConstraintSet empty;
  const SamplerConfig cfg = base_config(s);
  REQUIRE_THROWS_WITH(cps_sample(d, empty, cfg),
                      Catch::Matchers::ContainsSubstring("use ddim_sample instead"));
  REQUIRE_THROWS_AS(guided_sample(d, empty, cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(cop_project_baseline(d, empty, cfg), std::invalid_argument);
  Dataset ds;
  ds.samples.push_back(zeros(1, 4));
  REQUIRE_THROWS_AS(cop_project_baseline(ds, empty, cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(cop_project_baseline(Dataset{}, empty, cfg), std::invalid_argument);
}

TEST_CASE("schedule length must match the denoiser") {
  LearnedDenoiser d(MlpSpec{1, 4, 8, 1, 4}, linear_schedule(10), 1);
  REQUIRE_THROWS_WITH(ddim_sample(d, base_config(linear_schedule(20))),
                      Catch::Matchers::ContainsSubstring("does not match"));
}

TEST_CASE("stochastic sampling differs from the deterministic path and stays finite") {
  const Schedule s = linear_schedule(30);
  LearnedDenoiser d(MlpSpec{1, 8, 16, 2, 4}, s, 4);
  SamplerConfig cfg = base_config(s, 3);
  const SampleReport det = ddim_sample(d, cfg);
  cfg.eta = 1.0;
  const SampleReport sto = ddim_sample(d, cfg);
  REQUIRE(det.sample.values != sto.sample.values);
  REQUIRE(is_finite(sto.sample));
  const SampleReport sto2 = ddim_sample(d, cfg);
  REQUIRE(sto.sample.values == sto2.sample.values);
}

TEST_CASE("single-step schedules sample in one hop") {
  const Schedule s = linear_schedule(1);
  GaussianDenoiser d(zeros(1, 6), s);
  const SampleReport r = ddim_sample(d, base_config(s));
  REQUIRE(r.steps == 1);
  REQUIRE(is_finite(r.sample));
}

TEST_CASE("trace records every step in reverse order with its slack measure") {
  const Schedule s = linear_schedule(12);
  GaussianDenoiser d(zeros(1, 8), s);
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 0.3));

  SamplerConfig cfg = base_config(s, 2);
  cfg.record_trace = true;
  const SampleReport r = cps_sample(d, set, cfg);
  REQUIRE(r.trace.size() == 12);
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    const TraceRow& row = r.trace[i];
    REQUIRE(row.t == 12 - static_cast<int>(i));
    REQUIRE(row.pi == violation(row.z0_pr, set));
    REQUIRE(is_finite(row.z0_hat));
    REQUIRE(is_finite(row.z0_pr));
  }
  // Projection pulls the slack measure down step by step; by the end it is
  // inside the compiled tolerance band.
  REQUIRE(r.trace.back().pi <= 1e-6);

  const SampleReport no_trace = cps_sample(d, set, base_config(s, 2));
  REQUIRE(no_trace.trace.empty());
  REQUIRE(no_trace.sample.values == r.sample.values);
}

TEST_CASE("constrained sampling satisfies a mean target on the analytic denoiser") {
  const Schedule s = linear_schedule(50);
  GaussianDenoiser d(zeros(1, 8), s);
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 0.3));
  set.constraints.push_back(value_at_constraint(0, 2, -0.1));

  const SampleReport r = cps_sample(d, set, base_config(s, 31));
  REQUIRE(r.converged);
  REQUIRE(r.projection_failures == 0);
  REQUIRE(r.per_constraint.size() == 2);
  REQUIRE(r.violation_total == r.per_constraint.sum());
  REQUIRE(r.per_constraint == per_constraint_violation(r.sample, set));
  REQUIRE(r.violation_total == 0.0);  // final slack sits inside the 0.01 budget
  REQUIRE(r.wall_time_seconds >= 0.0);
}

TEST_CASE("starved projection budgets are surfaced in the report") {
  const Schedule s = linear_schedule(10);
  GaussianDenoiser d(zeros(1, 6), s);
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 5.0));

  SamplerConfig cfg = base_config(s, 1);
  cfg.projection.max_iterations = 1;
  cfg.projection.grad_tolerance = 1e-18;
  cfg.projection.use_closed_form = false;
  cfg.projection.use_active_set = false;
  const SampleReport r = cps_sample(d, set, cfg);
  REQUIRE_FALSE(r.converged);
  REQUIRE(r.projection_failures >= 1);
  REQUIRE(is_finite(r.sample));
}

TEST_CASE("projection blow-ups are wrapped with the failing step") {
  const Schedule s = linear_schedule(8);
  GaussianDenoiser d(zeros(1, 6), s);
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 2.0));
  SamplerConfig cfg = base_config(s, 1);
  cfg.gamma_fn = [](int) { return std::numeric_limits<double>::quiet_NaN(); };
  REQUIRE_THROWS_WITH(cps_sample(d, set, cfg),
                      Catch::Matchers::ContainsSubstring("projection failed at step t="));
}

TEST_CASE("a denoiser emitting non-finite values is caught at the failing step") {
  NanDenoiser d;
  REQUIRE_THROWS_WITH(ddim_sample(d, base_config(d.sched)),
                      Catch::Matchers::ContainsSubstring("non-finite values at step t=5"));
}

TEST_CASE("dataset-seeded baseline projects a uniformly chosen sample") {
  Dataset ds;
  for (int i = 0; i < 3; ++i) {
    TimeSeries ts(1, 6);
    for (int u = 0; u < 6; ++u) ts.values(0, u) = 0.1 * (i + 1) * (u + 1);
    ds.samples.push_back(ts);
  }
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 0.5));

  SamplerConfig cfg = base_config(linear_schedule(5), 77);
  cfg.sample_index = 2;
  const SampleReport r = cop_project_baseline(ds, set, cfg);
  REQUIRE(r.steps == 0);

  const auto idx = CounterRng(77, 2, 0).uniform_int(0, 2);
  const AffineSystem sys = compile_affine(set, 1, 6);
  const ProjectionResult direct =
      project_system(flatten(ds.samples[static_cast<std::size_t>(idx)]), sys,
                     cfg.schedule.gamma_clip, cfg.projection);
  REQUIRE(r.sample.values == direct.z_pr.values);
  REQUIRE(r.per_constraint == per_constraint_violation(r.sample, set));
}

TEST_CASE("generator-seeded baseline projects the unconstrained sample") {
  const Schedule s = linear_schedule(15);
  GaussianDenoiser d(zeros(1, 6), s);
  ConstraintSet set;
  set.constraints.push_back(mean_constraint(0, 0.5));

  const SamplerConfig cfg = base_config(s, 13);
  const SampleReport r = cop_project_baseline(d, set, cfg);
  REQUIRE(r.steps == 15);

  const SampleReport plain = ddim_sample(d, cfg);
  const AffineSystem sys = compile_affine(set, 1, 6);
  const ProjectionResult direct = project_system(
      flatten(plain.sample), sys, cfg.schedule.gamma_clip, cfg.projection);
  REQUIRE(r.sample.values == direct.z_pr.values);
}
