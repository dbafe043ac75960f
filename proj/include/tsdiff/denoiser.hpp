#ifndef TSDIFF_DENOISER_HPP
#define TSDIFF_DENOISER_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsdiff/errors.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"
#include "tsdiff/series.hpp"

namespace tsdiff {

// Noise-prediction interface: maps a noisy sample and step index to an
// estimate of the injected noise.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual TimeSeries predict_noise(const TimeSeries& z_t, int t) const = 0;
  virtual int channels() const = 0;
  virtual int horizon() const = 0;
  virtual const Schedule& schedule() const = 0;

  int steps() const { return schedule().steps; }

  // One-shot clean-sample estimate (z_t - sqrt(1-ab_t) eps_hat) / sqrt(ab_t).
  // Implementations with an exact posterior may override to stay defined at
  // ab_t = 0.
  virtual TimeSeries posterior_mean_from(const TimeSeries& z_t, int t,
                                         const TimeSeries& eps_hat) const {
    const double ab = schedule().alpha_bar_at(t);
    if (ab <= 0.0)
      throw std::invalid_argument(
          "posterior mean undefined at alpha_bar = 0 (terminal noise)");
    TimeSeries out;
    out.values = (z_t.values - std::sqrt(1.0 - ab) * eps_hat.values) / std::sqrt(ab);
    return out;
  }

 protected:
  void check_inputs(const TimeSeries& z_t, int t) const {
    if (z_t.channels() != channels() || z_t.horizon() != horizon())
      throw std::invalid_argument("denoiser input shape mismatch");
    if (t < 1 || t > steps())
      throw std::invalid_argument("denoiser step index out of range: t=" + std::to_string(t));
  }
};

inline TimeSeries posterior_mean(const Denoiser& d, const TimeSeries& z_t, int t) {
  return d.posterior_mean_from(z_t, t, d.predict_noise(z_t, t));
}

// Exact denoiser for data drawn from N(mu, I):
//   eps*(z_t, t) = -sqrt(1 - ab_t) (sqrt(ab_t) mu - z_t),
// whose induced posterior mean is (1 - ab_t) mu + sqrt(ab_t) z_t (finite even
// at ab_t = 0, where the generic quotient form breaks down).
class GaussianDenoiser : public Denoiser {
 public:
  GaussianDenoiser(TimeSeries mu, Schedule schedule)
      : mu_(std::move(mu)), schedule_(std::move(schedule)) {
    require_finite(mu_, "GaussianDenoiser mean");
  }

  TimeSeries predict_noise(const TimeSeries& z_t, int t) const override {
    check_inputs(z_t, t);
    const double ab = schedule_.alpha_bar_at(t);
    TimeSeries out;
    out.values = -std::sqrt(1.0 - ab) * (std::sqrt(ab) * mu_.values - z_t.values);
    return out;
  }

  TimeSeries posterior_mean_from(const TimeSeries& z_t, int t,
                                 const TimeSeries& /*eps_hat*/) const override {
    check_inputs(z_t, t);
    const double ab = schedule_.alpha_bar_at(t);
    TimeSeries out;
    out.values = (1.0 - ab) * mu_.values + std::sqrt(ab) * z_t.values;
    return out;
  }

  int channels() const override { return mu_.channels(); }
  int horizon() const override { return mu_.horizon(); }
  const Schedule& schedule() const override { return schedule_; }
  const TimeSeries& mu() const { return mu_; }

 private:
  TimeSeries mu_;
  Schedule schedule_;
};

// Fully connected reference architecture: [flatten(z_t); sinusoidal_embed(t)]
// through hidden_layers SiLU layers of hidden_width units, linear output
// reshaped to K x L.
struct MlpSpec {
  int channels = 1;
  int horizon = 96;
  int hidden_width = 256;
  int hidden_layers = 3;
  int time_embed_dim = 32;

  int input_dim() const { return channels * horizon + time_embed_dim; }
  int output_dim() const { return channels * horizon; }
};

class LearnedDenoiser : public Denoiser {
 public:
  LearnedDenoiser(MlpSpec spec, Schedule schedule, std::uint64_t init_seed = 0)
      : spec_(spec), schedule_(std::move(schedule)) {
    if (spec_.channels < 1 || spec_.horizon < 1 || spec_.hidden_width < 1 ||
        spec_.hidden_layers < 1)
      throw std::invalid_argument("invalid denoiser architecture");
    if (spec_.time_embed_dim < 2 || spec_.time_embed_dim % 2 != 0)
      throw std::invalid_argument("time embedding dimension must be even and >= 2");
    const auto dims = layer_dims();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      CounterRng rng(init_seed, 0x494e4954ULL, l);  // "INIT"
      const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      W_.push_back(rng.normal_matrix(dims[l + 1], dims[l]) * scale);
      b_.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
  }

  TimeSeries predict_noise(const TimeSeries& z_t, int t) const override {
    check_inputs(z_t, t);
    Eigen::MatrixXd x(spec_.input_dim(), 1);
    x.col(0) = assemble_input(z_t, t);
    const Eigen::MatrixXd out = forward(x);
    return unflatten(out.col(0), spec_.channels, spec_.horizon);
  }

  int channels() const override { return spec_.channels; }
  int horizon() const override { return spec_.horizon; }
  const Schedule& schedule() const override { return schedule_; }
  const MlpSpec& spec() const { return spec_; }

  std::vector<Eigen::MatrixXd>& weights() { return W_; }
  std::vector<Eigen::VectorXd>& biases() { return b_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return W_; }
  const std::vector<Eigen::VectorXd>& biases() const { return b_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& W : W_) n += static_cast<std::size_t>(W.size());
    for (const auto& b : b_) n += static_cast<std::size_t>(b.size());
    return n;
  }

  Eigen::VectorXd assemble_input(const TimeSeries& z_t, int t) const {
    Eigen::VectorXd x(spec_.input_dim());
    x.head(spec_.output_dim()) = flatten(z_t);
    x.tail(spec_.time_embed_dim) = time_embedding(t);
    return x;
  }

  Eigen::VectorXd time_embedding(int t) const {
    const int half = spec_.time_embed_dim / 2;
    Eigen::VectorXd e(spec_.time_embed_dim);
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
      e[2 * i] = std::sin(t * freq);
      e[2 * i + 1] = std::cos(t * freq);
    }
    return e;
  }

  // Batched forward pass; one column per sample.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd h = x;
    for (std::size_t l = 0; l + 1 < W_.size(); ++l) {
      h = ((W_[l] * h).colwise() + b_[l]).unaryExpr([](double v) { return silu(v); });
    }
    return (W_.back() * h).colwise() + b_.back();
  }

  struct Gradients {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;
  };

  // Mean-over-batch squared error sum_j ||eps_j - out_j||^2 / B, with
  // reverse-mode parameter gradients.
  double loss_and_gradients(const Eigen::MatrixXd& x, const Eigen::MatrixXd& eps,
                            Gradients* grads) const {
    const auto B = x.cols();
    const std::size_t n_layers = W_.size();
    std::vector<Eigen::MatrixXd> pre(n_layers);   // pre-activations
    std::vector<Eigen::MatrixXd> act(n_layers + 1);
    act[0] = x;
    for (std::size_t l = 0; l < n_layers; ++l) {
      pre[l] = (W_[l] * act[l]).colwise() + b_[l];
      if (l + 1 < n_layers)
        act[l + 1] = pre[l].unaryExpr([](double v) { return silu(v); });
      else
        act[l + 1] = pre[l];
    }
    const Eigen::MatrixXd diff = act[n_layers] - eps;
    const double loss = diff.squaredNorm() / static_cast<double>(B);
    if (grads) {
      grads->W.assign(n_layers, Eigen::MatrixXd());
      grads->b.assign(n_layers, Eigen::VectorXd());
      Eigen::MatrixXd delta = 2.0 * diff / static_cast<double>(B);
      for (std::size_t l = n_layers; l-- > 0;) {
        grads->W[l] = delta * act[l].transpose();
        grads->b[l] = delta.rowwise().sum();
        if (l > 0) {
          delta = (W_[l].transpose() * delta).array() *
                  pre[l - 1].unaryExpr([](double v) { return silu_grad(v); }).array();
        }
      }
    }
    return loss;
  }

 private:
  static double silu(double v) { return v / (1.0 + std::exp(-v)); }
  static double silu_grad(double v) {
    const double s = 1.0 / (1.0 + std::exp(-v));
    return s * (1.0 + v * (1.0 - s));
  }

  std::vector<int> layer_dims() const {
    std::vector<int> dims;
    dims.push_back(spec_.input_dim());
    for (int l = 0; l < spec_.hidden_layers; ++l) dims.push_back(spec_.hidden_width);
    dims.push_back(spec_.output_dim());
    return dims;
  }

  MlpSpec spec_;
  Schedule schedule_;
  std::vector<Eigen::MatrixXd> W_;
  std::vector<Eigen::VectorXd> b_;
};

struct TrainingConfig {
  int iterations = 5000;
  int batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  int eval_interval = 50;
  double smoothing = 0.98;  // EMA factor of the logged smoothed loss
  int hidden_width = 256;
  int hidden_layers = 3;
  int time_embed_dim = 32;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long step_count = 0;

  static AdamState zeros_like(const LearnedDenoiser& model) {
    AdamState s;
    for (const auto& W : model.weights()) {
      s.mW.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
      s.vW.push_back(Eigen::MatrixXd::Zero(W.rows(), W.cols()));
    }
    for (const auto& b : model.biases()) {
      s.mb.push_back(Eigen::VectorXd::Zero(b.size()));
      s.vb.push_back(Eigen::VectorXd::Zero(b.size()));
    }
    return s;
  }
};

struct TrainState {
  LearnedDenoiser model;
  AdamState opt;
  long iteration = 0;
  double smoothed_loss = 0.0;
  bool have_smoothed = false;
};

struct TrainingLogRow {
  long iteration = 0;
  double loss = 0.0;
  double smoothed = 0.0;
};

class TrainingDivergedError : public NumericalError {
 public:
  TrainingDivergedError(const std::string& msg, TrainState last)
      : NumericalError(msg), last_finite(std::move(last)) {}
  TrainState last_finite;
};

namespace detail {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

template <typename Mat>
inline void adam_update(Mat& param, const Mat& grad, Mat& m, Mat& v, double lr,
                        long step) {
  m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
  v = (kAdamBeta2 * v.array() + (1.0 - kAdamBeta2) * grad.array().square()).matrix();
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
}

}  // namespace detail

// Runs `iterations` further optimizer steps on `state`. Batches are drawn
// with counter-based streams keyed by (seed, global iteration, slot), so a
// resumed run reproduces a longer fresh run exactly.
inline std::vector<TrainingLogRow> train_more(TrainState& state, const Dataset& ds,
                                              const TrainingConfig& cfg, int iterations) {
  require_uniform(ds, "train_denoiser");
  if (cfg.batch_size < 1 || cfg.iterations < 0 || !(cfg.learning_rate > 0.0))
    throw std::invalid_argument("invalid training configuration");
  LearnedDenoiser& model = state.model;
  const Schedule& sched = model.schedule();
  if (ds.channels() != model.channels() || ds.horizon() != model.horizon())
    throw std::invalid_argument("dataset shape does not match denoiser architecture");

  const int in_dim = model.spec().input_dim();
  const int out_dim = model.spec().output_dim();
  const int B = cfg.batch_size;
  std::vector<TrainingLogRow> log;
  TrainState last_finite = state;
  LearnedDenoiser::Gradients grads;
  Eigen::MatrixXd X(in_dim, B), Eps(out_dim, B);

  for (int step = 0; step < iterations; ++step) {
    const long it = state.iteration;
    for (int j = 0; j < B; ++j) {
      // Slot tag keeps these streams disjoint from the data-generation and
      // sampling streams, which use small stream_b values under the same seed.
      CounterRng rng(cfg.seed, static_cast<std::uint64_t>(it),
                     static_cast<std::uint64_t>(j) | (1ULL << 40));
      const auto idx = rng.uniform_int(0, ds.count() - 1);
      const int t = static_cast<int>(rng.uniform_int(1, sched.steps));
      Eigen::VectorXd eps(out_dim);
      for (int e = 0; e < out_dim; ++e) eps[e] = rng.normal();
      const Eigen::VectorXd z0 = flatten(ds.samples[static_cast<std::size_t>(idx)]);
      const double ab = sched.alpha_bar[t];
      X.col(j).head(out_dim) = std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
      X.col(j).tail(model.spec().time_embed_dim) = model.time_embedding(t);
      Eps.col(j) = eps;
    }
    const double loss = model.loss_and_gradients(X, Eps, &grads);
    if (!std::isfinite(loss))
      throw TrainingDivergedError(
          "training diverged (non-finite loss) at iteration " + std::to_string(it),
          last_finite);
    state.smoothed_loss = state.have_smoothed
                              ? cfg.smoothing * state.smoothed_loss + (1.0 - cfg.smoothing) * loss
                              : loss;
    state.have_smoothed = true;
    if (it % cfg.eval_interval == 0 || step + 1 == iterations)
      log.push_back({it, loss, state.smoothed_loss});

    ++state.opt.step_count;
    for (std::size_t l = 0; l < model.weights().size(); ++l) {
      detail::adam_update(model.weights()[l], grads.W[l], state.opt.mW[l], state.opt.vW[l],
                          cfg.learning_rate, state.opt.step_count);
      detail::adam_update(model.biases()[l], grads.b[l], state.opt.mb[l], state.opt.vb[l],
                          cfg.learning_rate, state.opt.step_count);
    }
    ++state.iteration;
    if (it % cfg.eval_interval == 0) last_finite = state;
  }
  return log;
}

struct TrainResult {
  TrainState state;
  std::vector<TrainingLogRow> log;
};

inline TrainResult train_denoiser(const Dataset& ds, const Schedule& schedule,
                                  const TrainingConfig& cfg) {
  require_uniform(ds, "train_denoiser");
  MlpSpec spec;
  spec.channels = ds.channels();
  spec.horizon = ds.horizon();
  spec.hidden_width = cfg.hidden_width;
  spec.hidden_layers = cfg.hidden_layers;
  spec.time_embed_dim = cfg.time_embed_dim;
  TrainResult result{
      TrainState{LearnedDenoiser(spec, schedule, cfg.seed), AdamState{}, 0, 0.0, false},
      {}};
  result.state.opt = AdamState::zeros_like(result.state.model);
  result.log = train_more(result.state, ds, cfg, cfg.iterations);
  return result;
}

// ---- checkpoint io ----------------------------------------------------------
// Versioned textual dump: header, architecture manifest, then named tensors
// with shapes; 17 significant digits so reload is bit-exact.

namespace detail {

inline void write_tensor(std::ofstream& out, const std::string& name,
                         const Eigen::MatrixXd& m) {
  out << "tensor " << name << " " << m.rows() << " " << m.cols() << "\n";
  char buf[40];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out << (c ? " " : "") << buf;
    }
    out << "\n";
  }
}

inline Eigen::MatrixXd read_tensor(std::istream& in, const std::string& expect_name) {
  std::string tag, name;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> tag >> name >> rows >> cols) || tag != "tensor" || name != expect_name ||
      rows < 1 || cols < 1)
    throw std::runtime_error("corrupt checkpoint: expected tensor " + expect_name);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(in >> m(r, c)))
        throw std::runtime_error("corrupt checkpoint: truncated tensor " + expect_name);
  return m;
}

}  // namespace detail

inline void save_checkpoint(const TrainState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  const auto& model = state.model;
  const auto& spec = model.spec();
  const auto& sched = model.schedule();
  out << "tsdiff-checkpoint v1\n";
  out << "channels " << spec.channels << "\n";
  out << "horizon " << spec.horizon << "\n";
  out << "hidden_width " << spec.hidden_width << "\n";
  out << "hidden_layers " << spec.hidden_layers << "\n";
  out << "time_embed_dim " << spec.time_embed_dim << "\n";
  out << "iteration " << state.iteration << "\n";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", state.smoothed_loss);
  out << "smoothed_loss " << buf << "\n";
  out << "have_smoothed " << (state.have_smoothed ? 1 : 0) << "\n";
  out << "adam_steps " << state.opt.step_count << "\n";
  detail::write_tensor(out, "alpha_bar", state.model.schedule().alpha_bar);
  detail::write_tensor(out, "beta", sched.beta);
  detail::write_tensor(out, "sigma", sched.sigma);
  std::snprintf(buf, sizeof(buf), "%.17g", sched.gamma_clip);
  out << "gamma_clip " << buf << "\n";
  for (std::size_t l = 0; l < model.weights().size(); ++l) {
    const auto id = std::to_string(l);
    detail::write_tensor(out, "W" + id, model.weights()[l]);
    detail::write_tensor(out, "b" + id, model.biases()[l]);
    detail::write_tensor(out, "mW" + id, state.opt.mW[l]);
    detail::write_tensor(out, "vW" + id, state.opt.vW[l]);
    detail::write_tensor(out, "mb" + id, state.opt.mb[l]);
    detail::write_tensor(out, "vb" + id, state.opt.vb[l]);
  }
}

inline TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::string magic, version;
  if (!(in >> magic >> version) || magic != "tsdiff-checkpoint" || version != "v1")
    throw std::runtime_error("corrupt checkpoint: bad header in " + path);
  auto read_field = [&](const std::string& key) -> double {
    std::string k;
    double v = 0.0;
    if (!(in >> k >> v) || k != key)
      throw std::runtime_error("corrupt checkpoint: expected field " + key);
    return v;
  };
  MlpSpec spec;
  spec.channels = static_cast<int>(read_field("channels"));
  spec.horizon = static_cast<int>(read_field("horizon"));
  spec.hidden_width = static_cast<int>(read_field("hidden_width"));
  spec.hidden_layers = static_cast<int>(read_field("hidden_layers"));
  spec.time_embed_dim = static_cast<int>(read_field("time_embed_dim"));
  const long iteration = static_cast<long>(read_field("iteration"));
  const double smoothed = read_field("smoothed_loss");
  const bool have_smoothed = read_field("have_smoothed") != 0.0;
  const long adam_steps = static_cast<long>(read_field("adam_steps"));
  const Eigen::VectorXd alpha_bar = detail::read_tensor(in, "alpha_bar");
  const Eigen::VectorXd beta = detail::read_tensor(in, "beta");
  const Eigen::VectorXd sigma = detail::read_tensor(in, "sigma");
  const double gamma_clip = read_field("gamma_clip");
  Schedule sched = schedule_from_alpha_bar(alpha_bar, gamma_clip);
  if (beta.size() != sched.beta.size() || sigma.size() != sched.sigma.size())
    throw std::runtime_error("corrupt checkpoint: schedule arrays inconsistent");
  sched.beta = beta;
  sched.sigma = sigma;

  TrainState state{LearnedDenoiser(spec, sched), AdamState{}, iteration, smoothed,
                   have_smoothed};
  state.opt = AdamState::zeros_like(state.model);
  state.opt.step_count = adam_steps;
  for (std::size_t l = 0; l < state.model.weights().size(); ++l) {
    const auto id = std::to_string(l);
    const auto& Wl = state.model.weights()[l];
    auto expect = [&](const std::string& name, Eigen::Index rows,
                      Eigen::Index cols) -> Eigen::MatrixXd {
      Eigen::MatrixXd m = detail::read_tensor(in, name);
      if (m.rows() != rows || m.cols() != cols)
        throw std::runtime_error("corrupt checkpoint: tensor shape mismatch for " + name);
      return m;
    };
    state.model.weights()[l] = expect("W" + id, Wl.rows(), Wl.cols());
    state.model.biases()[l] = expect("b" + id, Wl.rows(), 1);
    state.opt.mW[l] = expect("mW" + id, Wl.rows(), Wl.cols());
    state.opt.vW[l] = expect("vW" + id, Wl.rows(), Wl.cols());
    state.opt.mb[l] = expect("mb" + id, Wl.rows(), 1);
    state.opt.vb[l] = expect("vb" + id, Wl.rows(), 1);
  }
  return state;
}

}  // namespace tsdiff

#endif  // TSDIFF_DENOISER_HPP
