// Command-line front end: data generation, denoiser training, constrained
// sampling, metric evaluation, and convergence verification. Every command
// reads an optional config file, applies flag overrides on top, and writes a
// resolved-config snapshot next to its outputs so runs can be reproduced
// exactly.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsdiff/analysis.hpp"
#include "tsdiff/config.hpp"
#include "tsdiff/constraints.hpp"
#include "tsdiff/denoiser.hpp"
#include "tsdiff/errors.hpp"
#include "tsdiff/metrics.hpp"
#include "tsdiff/projection.hpp"
#include "tsdiff/sampler.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/series.hpp"

namespace fs = std::filesystem;
namespace ts = tsdiff;

namespace {

template <typename Fn>
void parallel_for(long n, int threads, Fn&& fn) {
  threads = static_cast<int>(std::min<long>(std::max(1, threads), std::max<long>(1, n)));
  if (threads <= 1) {
    for (long i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::mutex err_mutex;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&]() {
      try {
        for (long i; (i = next.fetch_add(1)) < n;) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mutex);
        if (!err) err = std::current_exception();
        next.store(n);  // stop the other workers
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// Options shared by every subcommand: config file plus ordered overrides
// (dedicated flags first, then --set key=value pairs).
struct CmdOpts {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> flag_overrides;
  std::vector<std::string> set_args;
};

ts::ConfigMap build_cfg(const CmdOpts& o) {
  ts::ConfigMap cfg =
      o.config_path.empty() ? ts::ConfigMap() : ts::ConfigMap::parse_file(o.config_path);
  for (const auto& [k, v] : o.flag_overrides) cfg.set(k, v);
  for (const auto& kv : o.set_args) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0)
      throw std::invalid_argument("--set expects key=value, got: " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

void add_common_flags(CLI::App* cmd, CmdOpts& o) {
  cmd->add_option("--config", o.config_path, "Config file (key = value lines)");
  cmd->add_option("--set", o.set_args,
                  "Override any config key as key=value (repeatable; applied last)");
  auto pass = [cmd, &o](const std::string& flag, const std::string& key,
                        const std::string& desc) {
    cmd->add_option_function<std::string>(
        flag, [&o, key](const std::string& v) { o.flag_overrides.emplace_back(key, v); },
        desc);
  };
  pass("--out", "out", "Output directory [out]");
  pass("--seed", "seed", "Global RNG seed [0]");
  pass("--threads", "threads", "Worker thread count [hardware]");
}

int thread_count(const ts::ConfigMap& cfg) {
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto t = cfg.get_int("threads", static_cast<std::int64_t>(hw));
  if (t < 1) throw std::invalid_argument("threads must be >= 1");
  return static_cast<int>(t);
}

fs::path make_out_dir(const ts::ConfigMap& cfg) {
  const fs::path out = cfg.get_string("out", "out");
  fs::create_directories(out);
  return out;
}

void snapshot(ts::ConfigMap resolved, const fs::path& out) {
  resolved.save((out / "resolved.cfg").string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

// ---------------------------------------------------------------------------
// gen-data

int cmd_gen_data(const CmdOpts& o) {
  ts::ConfigMap cfg = build_cfg(o);
  const auto seed = cfg.get_uint64("seed", 0);
  const fs::path out = make_out_dir(cfg);
  const int count = static_cast<int>(cfg.get_int("data.count", 16650));
  const int horizon = static_cast<int>(cfg.get_int("data.horizon", 96));
  const double amp_lo = cfg.get_real("data.amp_lo", 0.1);
  const double amp_hi = cfg.get_real("data.amp_hi", 1.0);
  cfg.get_int("threads", 1);  // accepted everywhere, unused here
  cfg.reject_unknown_keys();

  const ts::Dataset all = ts::generate_waveforms(count, horizon, amp_lo, amp_hi, seed);
  const int train_n = count * 8 / 10;
  const int val_n = (count - train_n) / 2;
  const int test_n = count - train_n - val_n;
  auto slice = [&](int from, int n) {
    ts::Dataset d;
    d.samples.assign(all.samples.begin() + from, all.samples.begin() + from + n);
    return d;
  };
  ts::write_csv(slice(0, train_n), (out / "train.csv").string());
  ts::write_csv(slice(train_n, val_n), (out / "val.csv").string());
  ts::write_csv(slice(train_n + val_n, test_n), (out / "test.csv").string());

  ts::ConfigMap resolved;
  resolved.set("out", out.string());
  resolved.set_int("seed", static_cast<std::int64_t>(seed));
  resolved.set_int("data.count", count);
  resolved.set_int("data.horizon", horizon);
  resolved.set_real("data.amp_lo", amp_lo);
  resolved.set_real("data.amp_hi", amp_hi);
  snapshot(resolved, out);

  std::cout << "wrote " << train_n << "/" << val_n << "/" << test_n
            << " train/val/test samples (horizon " << horizon << ") to " << out.string()
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const CmdOpts& o) {
  ts::ConfigMap cfg = build_cfg(o);
  const auto seed = cfg.get_uint64("seed", 0);
  const fs::path out = make_out_dir(cfg);
  const std::string data_path = cfg.require_string("data.path");
  const std::string resume = cfg.get_string("train.resume", "");
  const bool do_normalize = cfg.get_bool("train.normalize", false);
  const ts::ScheduleSpec sspec = ts::schedule_spec_from_config(cfg);
  ts::TrainingConfig tc;
  tc.iterations = static_cast<int>(cfg.get_int("train.iterations", 5000));
  tc.batch_size = static_cast<int>(cfg.get_int("train.batch", 64));
  tc.learning_rate = cfg.get_real("train.lr", 1e-4);
  tc.eval_interval = static_cast<int>(cfg.get_int("train.eval_interval", 50));
  tc.smoothing = cfg.get_real("train.smoothing", 0.98);
  tc.hidden_width = static_cast<int>(cfg.get_int("train.width", 256));
  tc.hidden_layers = static_cast<int>(cfg.get_int("train.layers", 3));
  tc.time_embed_dim = static_cast<int>(cfg.get_int("train.embed", 32));
  tc.seed = seed;
  cfg.get_int("threads", 1);
  cfg.reject_unknown_keys();

  ts::Dataset ds = ts::read_csv(data_path);
  if (do_normalize) {
    ds = ts::normalize(ds);
    ts::save_normalization(*ds.normalization, (out / "normalization.txt").string());
  }

  std::vector<ts::TrainingLogRow> log;
  ts::TrainState state{ts::LearnedDenoiser(ts::MlpSpec{1, 1, 1, 1, 2},
                                           ts::linear_schedule(1)),
                       ts::AdamState{}, 0, 0.0, false};
  try {
    if (resume.empty()) {
      ts::TrainResult r = ts::train_denoiser(ds, ts::make_schedule(sspec), tc);
      state = std::move(r.state);
      log = std::move(r.log);
    } else {
      state = ts::load_checkpoint(resume);
      const long todo = std::max<long>(0, tc.iterations - state.iteration);
      log = ts::train_more(state, ds, tc, static_cast<int>(todo));
    }
  } catch (const ts::TrainingDivergedError& e) {
    ts::save_checkpoint(e.last_finite, (out / "checkpoint.diverged.txt").string());
    throw;
  }
  ts::save_checkpoint(state, (out / "checkpoint.txt").string());

  std::string loss_csv = "iteration,loss,smoothed\n";
  char buf[96];
  for (const auto& row : log) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g\n", row.iteration, row.loss,
                  row.smoothed);
    loss_csv += buf;
  }
  write_text(out / "loss.csv", loss_csv);

  ts::ConfigMap resolved;
  resolved.set("out", out.string());
  resolved.set_int("seed", static_cast<std::int64_t>(seed));
  resolved.set("data.path", data_path);
  if (!resume.empty()) resolved.set("train.resume", resume);
  resolved.set("train.normalize", do_normalize ? "true" : "false");
  ts::schedule_spec_to_config(sspec, resolved);
  resolved.set_int("train.iterations", tc.iterations);
  resolved.set_int("train.batch", tc.batch_size);
  resolved.set_real("train.lr", tc.learning_rate);
  resolved.set_int("train.eval_interval", tc.eval_interval);
  resolved.set_real("train.smoothing", tc.smoothing);
  resolved.set_int("train.width", tc.hidden_width);
  resolved.set_int("train.layers", tc.hidden_layers);
  resolved.set_int("train.embed", tc.time_embed_dim);
  snapshot(resolved, out);

  std::cout << "model has " << state.model.parameter_count()
            << " parameters; trained to iteration " << state.iteration
            << ", smoothed loss " << state.smoothed_loss << "; checkpoint at "
            << (out / "checkpoint.txt").string() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// sample

ts::ProjectionConfig projection_from_config(ts::ConfigMap& cfg) {
  ts::ProjectionConfig pc;
  pc.max_iterations = static_cast<int>(cfg.get_int("projection.max_iterations", 500));
  pc.grad_tolerance = cfg.get_real("projection.grad_tolerance", 1e-8);
  const std::string rule = cfg.get_string("projection.step_rule", "backtracking");
  if (rule == "backtracking")
    pc.step_rule = ts::ProjectionConfig::StepRule::backtracking;
  else if (rule == "fixed")
    pc.step_rule = ts::ProjectionConfig::StepRule::fixed_lipschitz;
  else
    throw std::invalid_argument("projection.step_rule must be backtracking or fixed");
  pc.use_closed_form = cfg.get_bool("projection.use_closed_form", true);
  pc.use_active_set = cfg.get_bool("projection.use_active_set", true);
  return pc;
}

int cmd_sample(const CmdOpts& o) {
  ts::ConfigMap cfg = build_cfg(o);
  const auto seed = cfg.get_uint64("seed", 0);
  const fs::path out = make_out_dir(cfg);
  const int threads = thread_count(cfg);
  const std::string method = cfg.get_string("method", "cps");
  const std::string checkpoint = cfg.require_string("checkpoint");
  const int count = static_cast<int>(cfg.get_int("count", 100));
  const std::string constraints_path = cfg.get_string("constraints.path", "");
  const double eta = cfg.get_real("sampler.eta", 0.0);
  const bool trace = cfg.get_bool("sampler.trace", false);
  const bool gw_given = cfg.has("sampler.guidance_weight");
  const double guidance_weight = cfg.get_real("sampler.guidance_weight", 0.0);
  const std::string data_path = cfg.get_string("data.path", "");
  const std::string norm_path = cfg.get_string("normalization.path", "");
  const ts::ProjectionConfig pc = projection_from_config(cfg);
  cfg.reject_unknown_keys();
  if (count < 1) throw std::invalid_argument("count must be >= 1");

  const ts::TrainState st = ts::load_checkpoint(checkpoint);
  const ts::LearnedDenoiser& den = st.model;

  ts::ConstraintSet set;
  bool have_set = false;
  if (!constraints_path.empty()) {
    set = ts::load_constraint_set(constraints_path);
    have_set = true;
  }

  ts::Dataset seeds;
  if (method == "ddim") {
    if (have_set)
      throw std::invalid_argument(
          "method=ddim does not take constraints; drop constraints.path or use "
          "method=cps");
  } else if (method == "cps") {
    if (!have_set || set.constraints.empty())
      throw std::invalid_argument(
          "method=cps needs a non-empty constraint set; for unconstrained sampling "
          "use method=ddim");
  } else if (method == "guided") {
    if (!have_set || set.constraints.empty())
      throw std::invalid_argument("method=guided needs a non-empty constraint set");
    if (!gw_given)
      throw std::invalid_argument("method=guided requires sampler.guidance_weight");
  } else if (method == "cop" || method == "cop-generated") {
    if (!have_set || set.constraints.empty())
      throw std::invalid_argument("method=" + method + " needs a non-empty constraint set");
    if (method == "cop") {
      if (data_path.empty())
        throw std::invalid_argument("method=cop needs data.path (seed samples)");
      seeds = ts::read_csv(data_path);
    }
  } else {
    throw std::invalid_argument(
        "unknown method '" + method + "' (expected ddim|cps|guided|cop|cop-generated)");
  }

  ts::SamplerConfig base;
  base.schedule = den.schedule();
  base.eta = eta;
  base.seed = seed;
  base.projection = pc;
  base.guidance_weight = guidance_weight;
  base.record_trace = trace;

  std::vector<ts::SampleReport> reports(static_cast<std::size_t>(count));
  parallel_for(count, threads, [&](long i) {
    ts::SamplerConfig c = base;
    c.sample_index = static_cast<std::uint64_t>(i);
    auto& slot = reports[static_cast<std::size_t>(i)];
    if (method == "ddim")
      slot = ts::ddim_sample(den, c);
    else if (method == "cps")
      slot = ts::cps_sample(den, set, c);
    else if (method == "guided")
      slot = ts::guided_sample(den, set, c);
    else if (method == "cop")
      slot = ts::cop_project_baseline(seeds, set, c);
    else
      slot = ts::cop_project_baseline(den, set, c);
  });

  ts::Dataset outds;
  std::optional<ts::Normalization> norm;
  if (!norm_path.empty()) norm = ts::load_normalization(norm_path);
  for (const auto& r : reports)
    outds.samples.push_back(norm ? ts::undo_normalization(r.sample, *norm) : r.sample);
  ts::write_csv(outds, (out / "samples.csv").string());

  nlohmann::json j;
  j["method"] = method;
  j["count"] = count;
  j["seed"] = seed;
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < count; ++i) {
    const auto& r = reports[static_cast<std::size_t>(i)];
    nlohmann::json row{{"index", i},
                       {"violation_total", r.violation_total},
                       {"converged", r.converged},
                       {"projection_failures", r.projection_failures},
                       {"steps", r.steps},
                       {"wall_time_seconds", r.wall_time_seconds}};
    row["per_constraint"] =
        std::vector<double>(r.per_constraint.data(),
                            r.per_constraint.data() + r.per_constraint.size());
    rows.push_back(std::move(row));
  }
  j["samples"] = std::move(rows);
  if (have_set) {
    std::vector<ts::TimeSeries> raw;
    raw.reserve(reports.size());
    for (const auto& r : reports) raw.push_back(r.sample);
    const ts::ViolationStats vs = ts::violation_stats(raw, set);
    j["aggregate"] = {{"violation_rate", vs.rate}, {"violation_magnitude", vs.magnitude}};
  }
  write_text(out / "report.json", j.dump(2) + "\n");

  if (trace) {
    std::string tcsv = "sample,t,pi,z0_hat_norm,z0_pr_norm,change_norm\n";
    char buf[160];
    for (int i = 0; i < count; ++i) {
      for (const auto& row : reports[static_cast<std::size_t>(i)].trace) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g\n", i, row.t,
                      row.pi, row.z0_hat.values.norm(), row.z0_pr.values.norm(),
                      (row.z0_pr.values - row.z0_hat.values).norm());
        tcsv += buf;
      }
    }
    write_text(out / "trace.csv", tcsv);
  }

  ts::ConfigMap resolved;
  resolved.set("out", out.string());
  resolved.set_int("seed", static_cast<std::int64_t>(seed));
  resolved.set_int("threads", threads);
  resolved.set("method", method);
  resolved.set("checkpoint", checkpoint);
  resolved.set_int("count", count);
  if (have_set) resolved.set("constraints.path", constraints_path);
  if (!data_path.empty()) resolved.set("data.path", data_path);
  if (!norm_path.empty()) resolved.set("normalization.path", norm_path);
  resolved.set_real("sampler.eta", eta);
  resolved.set("sampler.trace", trace ? "true" : "false");
  if (gw_given) resolved.set_real("sampler.guidance_weight", guidance_weight);
  resolved.set_int("projection.max_iterations", pc.max_iterations);
  resolved.set_real("projection.grad_tolerance", pc.grad_tolerance);
  resolved.set("projection.step_rule",
               pc.step_rule == ts::ProjectionConfig::StepRule::backtracking
                   ? "backtracking"
                   : "fixed");
  resolved.set("projection.use_closed_form", pc.use_closed_form ? "true" : "false");
  resolved.set("projection.use_active_set", pc.use_active_set ? "true" : "false");
  snapshot(resolved, out);

  std::cout << "wrote " << count << " samples (" << method << ") to " << out.string();
  if (have_set) {
    const auto& agg = j["aggregate"];
    std::cout << "; violation rate " << agg["violation_rate"].get<double>()
              << ", magnitude " << agg["violation_magnitude"].get<double>();
  }
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const CmdOpts& o) {
  ts::ConfigMap cfg = build_cfg(o);
  const fs::path out = make_out_dir(cfg);
  const int threads = thread_count(cfg);
  cfg.get_uint64("seed", 0);  // accepted for symmetry; metrics are deterministic
  const std::string gen_path = cfg.require_string("gen.path");
  const std::string ref_path = cfg.require_string("ref.path");
  const std::string constraints_path = cfg.get_string("constraints.path", "");
  const int window = static_cast<int>(cfg.get_int("ssim.window", 7));
  const double c1 = cfg.get_real("ssim.c1", 1e-4);
  const double c2 = cfg.get_real("ssim.c2", 9e-4);
  cfg.reject_unknown_keys();

  const ts::Dataset gen = ts::read_csv(gen_path);
  const ts::Dataset ref = ts::read_csv(ref_path);
  if (gen.count() != ref.count())
    throw std::invalid_argument("eval: gen and ref sample counts differ (" +
                                std::to_string(gen.count()) + " vs " +
                                std::to_string(ref.count()) + ")");
  const long n = gen.count();
  std::vector<double> dtw_vals(static_cast<std::size_t>(n));
  std::vector<double> ssim_vals(static_cast<std::size_t>(n));
  parallel_for(n, threads, [&](long i) {
    const auto& a = gen.samples[static_cast<std::size_t>(i)];
    const auto& b = ref.samples[static_cast<std::size_t>(i)];
    dtw_vals[static_cast<std::size_t>(i)] = ts::dtw(a, b);
    ssim_vals[static_cast<std::size_t>(i)] = ts::ssim_1d(a, b, window, c1, c2);
  });

  std::string rows = "index,dtw,ssim\n";
  char buf[96];
  double dtw_sum = 0.0, ssim_sum = 0.0;
  for (long i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g\n", i,
                  dtw_vals[static_cast<std::size_t>(i)],
                  ssim_vals[static_cast<std::size_t>(i)]);
    rows += buf;
    dtw_sum += dtw_vals[static_cast<std::size_t>(i)];
    ssim_sum += ssim_vals[static_cast<std::size_t>(i)];
  }
  write_text(out / "metrics.csv", rows);

  ts::MetricReport rep;
  rep.dtw = dtw_sum / static_cast<double>(n);
  rep.ssim = ssim_sum / static_cast<double>(n);
  rep.real_count = ref.count();
  rep.gen_count = gen.count();
  nlohmann::json j = ts::metric_report_to_json(rep);
  if (!constraints_path.empty()) {
    const ts::ConstraintSet set = ts::load_constraint_set(constraints_path);
    const ts::ViolationStats vs = ts::violation_stats(gen.samples, set);
    rep.violation_rate = vs.rate;
    rep.violation_magnitude = vs.magnitude;
    j["violation_rate"] = vs.rate;
    j["violation_magnitude"] = vs.magnitude;
  } else {
    j.erase("violation_rate");
    j.erase("violation_magnitude");
  }
  if (gen.count() >= 2 && ref.count() >= 2) {
    rep.feature_fd = ts::feature_frechet(ref, gen);
    j["feature_fd"] = rep.feature_fd;
  } else {
    j.erase("feature_fd");
  }
  write_text(out / "metrics.json", j.dump(2) + "\n");

  ts::ConfigMap resolved;
  resolved.set("out", out.string());
  resolved.set_int("threads", threads);
  resolved.set("gen.path", gen_path);
  resolved.set("ref.path", ref_path);
  if (!constraints_path.empty()) resolved.set("constraints.path", constraints_path);
  resolved.set_int("ssim.window", window);
  resolved.set_real("ssim.c1", c1);
  resolved.set_real("ssim.c2", c2);
  snapshot(resolved, out);

  std::cout << "evaluated " << n << " pairs: mean dtw " << rep.dtw << ", mean ssim "
            << rep.ssim << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const CmdOpts& o) {
  ts::ConfigMap cfg = build_cfg(o);
  const auto seed = cfg.get_uint64("seed", 0);
  const fs::path out = make_out_dir(cfg);
  const int threads = thread_count(cfg);
  const int instances = static_cast<int>(cfg.get_int("verify.instances", 20));
  const int T = static_cast<int>(cfg.get_int("verify.T", 2000));
  const std::string k_list = cfg.get_string("verify.k", "2,10,100");
  const int n_dim = static_cast<int>(cfg.get_int("verify.n", 4));
  const int m_dim = static_cast<int>(cfg.get_int("verify.m", 8));
  const int norm_instances = static_cast<int>(cfg.get_int("verify.norm_instances", 3));
  const int norm_T = static_cast<int>(cfg.get_int("verify.norm_T", 50));
  const double norm_k = cfg.get_real("verify.norm_k", 2.0);
  cfg.reject_unknown_keys();

  std::vector<double> ks;
  {
    std::istringstream in(k_list);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      if (tok.empty()) continue;
      ks.push_back(std::stod(tok));
    }
    if (ks.empty()) throw std::invalid_argument("verify.k must list at least one value");
  }
  for (double kv : ks)
    if (!(kv > 1.0))
      throw std::invalid_argument("verify.k values must be > 1 (penalty growth factor)");

  const long total = static_cast<long>(instances) * static_cast<long>(ks.size());
  std::vector<ts::SweepRow> sweep(static_cast<std::size_t>(total));
  std::atomic<int> failures{0};
  std::mutex log_mutex;
  parallel_for(total, threads, [&](long idx) {
    const int inst_id = static_cast<int>(idx / static_cast<long>(ks.size()));
    const double kv = ks[static_cast<std::size_t>(idx % static_cast<long>(ks.size()))];
    const ts::GaussianLinearInstance inst =
        ts::random_instance(n_dim, m_dim, seed, static_cast<std::uint64_t>(inst_id));
    ts::SweepRow row;
    row.instance_id = inst_id;
    row.n = inst.n;
    row.m = inst.m;
    row.k = kv;
    row.T = T;
    try {
      const ts::NormReport r = ts::verify_theorem2(
          inst, T, kv, ts::HarnessScheduleKind::linear_alpha_bar, seed);
      row.measured = r.measured_error;
      row.bound = r.bound;
    } catch (const ts::NumericalError& e) {
      ++failures;
      std::lock_guard<std::mutex> lk(log_mutex);
      std::cerr << "[verify] " << e.what() << "\n";
    }
    sweep[static_cast<std::size_t>(idx)] = row;
  });

  std::ostringstream sweep_csv;
  ts::write_sweep_csv(sweep_csv, sweep);
  write_text(out / "sweep.csv", sweep_csv.str());

  std::string norms_csv = "instance,t,K,E,F,D\n";
  for (int i = 0; i < norm_instances; ++i) {
    const ts::GaussianLinearInstance inst =
        ts::random_instance(n_dim, m_dim, seed, 1000 + static_cast<std::uint64_t>(i));
    const ts::Schedule sched = ts::harness_schedule(norm_T);
    try {
      const ts::NormReport r = ts::norm_checks(inst, sched, [&](int t) {
        return ts::theorem2_penalty(t, norm_T, norm_k, inst.lambda_min);
      });
      char buf[160];
      for (int t = 1; t <= norm_T; ++t) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g\n", i, t,
                      r.K_norms[static_cast<std::size_t>(t - 1)],
                      r.E_norms[static_cast<std::size_t>(t - 1)],
                      r.F_norms[static_cast<std::size_t>(t - 1)],
                      r.D_norms[static_cast<std::size_t>(t - 1)]);
        norms_csv += buf;
      }
    } catch (const ts::NumericalError& e) {
      ++failures;
      std::cerr << "[verify] " << e.what() << "\n";
    }
  }
  write_text(out / "norms.csv", norms_csv);

  ts::ConfigMap resolved;
  resolved.set("out", out.string());
  resolved.set_int("seed", static_cast<std::int64_t>(seed));
  resolved.set_int("threads", threads);
  resolved.set_int("verify.instances", instances);
  resolved.set_int("verify.T", T);
  resolved.set("verify.k", k_list);
  resolved.set_int("verify.n", n_dim);
  resolved.set_int("verify.m", m_dim);
  resolved.set_int("verify.norm_instances", norm_instances);
  resolved.set_int("verify.norm_T", norm_T);
  resolved.set_real("verify.norm_k", norm_k);
  snapshot(resolved, out);

  if (failures.load() > 0) {
    std::cerr << "verify: " << failures.load() << " assertion failure(s)\n";
    return 3;
  }
  std::cout << "verify: all " << total << " bound checks and " << norm_instances
            << " norm sweeps passed\n";
  return 0;
}

const char* kGenDataKeys =
    "Config keys: seed, out, threads, data.count, data.horizon, data.amp_lo, "
    "data.amp_hi";
const char* kTrainKeys =
    "Config keys: seed, out, threads, data.path, train.iterations, train.batch, "
    "train.lr, train.eval_interval, train.smoothing, train.width, train.layers, "
    "train.embed, train.resume, train.normalize, schedule.steps, schedule.beta_min, "
    "schedule.beta_max, schedule.eta, schedule.gamma_clip";
const char* kSampleKeys =
    "Config keys: seed, out, threads, method (ddim|cps|guided|cop|cop-generated), "
    "checkpoint, count, constraints.path, data.path (cop seeds), "
    "normalization.path, sampler.eta, sampler.trace, sampler.guidance_weight, "
    "projection.max_iterations, projection.grad_tolerance, projection.step_rule, "
    "projection.use_closed_form, projection.use_active_set";
const char* kEvalKeys =
    "Config keys: out, threads, gen.path, ref.path, constraints.path, ssim.window, "
    "ssim.c1, ssim.c2";
const char* kVerifyKeys =
    "Config keys: seed, out, threads, verify.instances, verify.T, verify.k, "
    "verify.n, verify.m, verify.norm_instances, verify.norm_T, verify.norm_k";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Constrained time-series diffusion: data generation, training, sampling, "
      "evaluation, and convergence verification"};
  app.require_subcommand(1);

  CmdOpts gen_o, train_o, sample_o, eval_o, verify_o;
  int rc = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate waveform train/val/test CSVs");
  gen->footer(kGenDataKeys);
  add_common_flags(gen, gen_o);
  gen->callback([&] { rc = cmd_gen_data(gen_o); });

  auto* train = app.add_subcommand("train", "Train the noise-prediction network");
  train->footer(kTrainKeys);
  add_common_flags(train, train_o);
  train->callback([&] { rc = cmd_train(train_o); });

  auto* sample = app.add_subcommand("sample", "Generate samples (ddim/cps/guided/cop)");
  sample->footer(kSampleKeys);
  add_common_flags(sample, sample_o);
  sample->callback([&] { rc = cmd_sample(sample_o); });

  auto* eval = app.add_subcommand("eval", "Compute metrics for generated samples");
  eval->footer(kEvalKeys);
  add_common_flags(eval, eval_o);
  eval->callback([&] { rc = cmd_eval(eval_o); });

  auto* verify = app.add_subcommand("verify", "Run the convergence verification sweeps");
  verify->footer(kVerifyKeys);
  add_common_flags(verify, verify_o);
  verify->callback([&] { rc = cmd_verify(verify_o); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ts::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
