#ifndef TSDIFF_SERIES_HPP
#define TSDIFF_SERIES_HPP

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsdiff/config.hpp"
#include "tsdiff/rng.hpp"
#include "tsdiff/schedule.hpp"

namespace tsdiff {

// A K-channel, L-step sample; values(k, u) is channel k at time index u
// (0-based internally; file formats and configs use 1-based timestamps).
struct TimeSeries {
  Eigen::MatrixXd values;

  TimeSeries() = default;
  explicit TimeSeries(Eigen::MatrixXd v) : values(std::move(v)) {}
  TimeSeries(int channels, int horizon) : values(Eigen::MatrixXd::Zero(channels, horizon)) {}

  int channels() const { return static_cast<int>(values.rows()); }
  int horizon() const { return static_cast<int>(values.cols()); }
};

inline bool is_finite(const TimeSeries& ts) { return ts.values.allFinite(); }

inline void require_finite(const TimeSeries& ts, const std::string& what) {
  if (!is_finite(ts)) throw std::invalid_argument(what + ": non-finite values");
}

inline void require_same_shape(const TimeSeries& a, const TimeSeries& b,
                               const std::string& what) {
  if (a.channels() != b.channels() || a.horizon() != b.horizon())
    throw std::invalid_argument(what + ": shape mismatch (" + std::to_string(a.channels()) +
                                "x" + std::to_string(a.horizon()) + " vs " +
                                std::to_string(b.channels()) + "x" +
                                std::to_string(b.horizon()) + ")");
}

// Channel-major flattening: flat[k*L + u] = values(k, u).
inline Eigen::VectorXd flatten(const TimeSeries& ts) {
  const int K = ts.channels(), L = ts.horizon();
  Eigen::VectorXd out(static_cast<Eigen::Index>(K) * L);
  for (int k = 0; k < K; ++k)
    for (int u = 0; u < L; ++u) out[static_cast<Eigen::Index>(k) * L + u] = ts.values(k, u);
  return out;
}

inline TimeSeries unflatten(const Eigen::VectorXd& flat, int channels, int horizon) {
  if (flat.size() != static_cast<Eigen::Index>(channels) * horizon)
    throw std::invalid_argument("unflatten: size mismatch");
  TimeSeries ts(channels, horizon);
  for (int k = 0; k < channels; ++k)
    for (int u = 0; u < horizon; ++u) ts.values(k, u) = flat[static_cast<Eigen::Index>(k) * horizon + u];
  return ts;
}

struct Normalization {
  Eigen::VectorXd mean;  // per channel
  Eigen::VectorXd std;   // per channel, > 0
};

struct Dataset {
  std::vector<TimeSeries> samples;
  std::optional<Normalization> normalization;

  int count() const { return static_cast<int>(samples.size()); }
  int channels() const { return samples.empty() ? 0 : samples.front().channels(); }
  int horizon() const { return samples.empty() ? 0 : samples.front().horizon(); }
};

inline void require_uniform(const Dataset& ds, const std::string& what) {
  if (ds.samples.empty()) throw std::invalid_argument(what + ": empty dataset");
  for (const auto& s : ds.samples) require_same_shape(s, ds.samples.front(), what);
}

// One univariate sinusoid a*sin(2*pi*f*u/L + phi) sampled at u = 0..L-1.
inline TimeSeries waveform(double amp, double phase, int freq, int horizon) {
  if (horizon < 1) throw std::invalid_argument("waveform: horizon must be >= 1");
  TimeSeries ts(1, horizon);
  for (int u = 0; u < horizon; ++u)
    ts.values(0, u) = amp * std::sin(2.0 * M_PI * freq * u / horizon + phase);
  return ts;
}

// Univariate sinusoids a*sin(2*pi*f*u/L + phi), u = 0..L-1, with
// a ~ U(amp_lo, amp_hi), phi ~ U(0, 2*pi) and integer frequency f drawn
// uniformly from [1, L/2) so every waveform stays below the Nyquist limit.
inline Dataset generate_waveforms(int count, int horizon, double amp_lo, double amp_hi,
                                  std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("waveform count must be >= 1");
  if (!(amp_lo > 0.0 && amp_lo <= amp_hi && amp_hi <= 1.0))
    throw std::invalid_argument("amplitude range must satisfy 0 < lo <= hi <= 1");
  const int f_max = (horizon + 1) / 2 - 1;  // largest integer strictly below L/2
  if (horizon < 2 || f_max < 1)
    throw std::invalid_argument("horizon too short for a nonzero frequency");
  Dataset ds;
  ds.samples.reserve(count);
  for (int i = 0; i < count; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i), 0);
    const double a = amp_lo + (amp_hi - amp_lo) * rng.uniform();
    const double phi = 2.0 * M_PI * rng.uniform();
    const int f = static_cast<int>(rng.uniform_int(1, f_max));
    ds.samples.push_back(waveform(a, phi, f, horizon));
  }
  return ds;
}

// Per-channel zero-mean unit-variance transform over the whole dataset
// (population variance, so the normalized moments are exact).
inline Dataset normalize(const Dataset& ds) {
  require_uniform(ds, "normalize");
  const int K = ds.channels(), L = ds.horizon();
  const double n = static_cast<double>(ds.count()) * L;
  Normalization rec;
  rec.mean = Eigen::VectorXd::Zero(K);
  rec.std = Eigen::VectorXd::Zero(K);
  for (int k = 0; k < K; ++k) {
    double sum = 0.0;
    for (const auto& s : ds.samples) sum += s.values.row(k).sum();
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& s : ds.samples)
      ss += (s.values.row(k).array() - mean).square().sum();
    const double sd = std::sqrt(ss / n);
    if (!(sd > 0.0))
      throw std::invalid_argument("normalize: channel " + std::to_string(k) +
                                  " is constant (zero variance)");
    rec.mean[k] = mean;
    rec.std[k] = sd;
  }
  Dataset out;
  out.samples.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    TimeSeries t(K, L);
    for (int k = 0; k < K; ++k)
      t.values.row(k) = (s.values.row(k).array() - rec.mean[k]) / rec.std[k];
    out.samples.push_back(std::move(t));
  }
  out.normalization = rec;
  return out;
}

inline Dataset denormalize(const Dataset& ds) {
  require_uniform(ds, "denormalize");
  if (!ds.normalization)
    throw std::invalid_argument("denormalize: no normalization record present");
  const auto& rec = *ds.normalization;
  const int K = ds.channels(), L = ds.horizon();
  if (rec.mean.size() != K || rec.std.size() != K)
    throw std::invalid_argument("denormalize: record channel count mismatch");
  Dataset out;
  out.samples.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    TimeSeries t(K, L);
    for (int k = 0; k < K; ++k)
      t.values.row(k) = s.values.row(k).array() * rec.std[k] + rec.mean[k];
    out.samples.push_back(std::move(t));
  }
  return out;
}

inline TimeSeries apply_normalization(const TimeSeries& s, const Normalization& rec) {
  TimeSeries t(s.channels(), s.horizon());
  for (int k = 0; k < s.channels(); ++k)
    t.values.row(k) = (s.values.row(k).array() - rec.mean[k]) / rec.std[k];
  return t;
}

inline TimeSeries undo_normalization(const TimeSeries& s, const Normalization& rec) {
  TimeSeries t(s.channels(), s.horizon());
  for (int k = 0; k < s.channels(); ++k)
    t.values.row(k) = s.values.row(k).array() * rec.std[k] + rec.mean[k];
  return t;
}

inline void save_normalization(const Normalization& rec, const std::string& path) {
  ConfigMap cfg;
  cfg.set_int("channels", rec.mean.size());
  for (Eigen::Index k = 0; k < rec.mean.size(); ++k) {
    cfg.set_real("mean." + std::to_string(k), rec.mean[k]);
    cfg.set_real("std." + std::to_string(k), rec.std[k]);
  }
  cfg.save(path);
}

inline Normalization load_normalization(const std::string& path) {
  const ConfigMap cfg = ConfigMap::parse_file(path);
  const auto K = cfg.get_int("channels", -1);
  if (K < 1) throw std::invalid_argument("normalization file missing channel count");
  Normalization rec;
  rec.mean.resize(K);
  rec.std.resize(K);
  for (std::int64_t k = 0; k < K; ++k) {
    rec.mean[k] = cfg.get_real("mean." + std::to_string(k), std::nan(""));
    rec.std[k] = cfg.get_real("std." + std::to_string(k), std::nan(""));
    if (!std::isfinite(rec.mean[k]) || !(rec.std[k] > 0.0))
      throw std::invalid_argument("normalization file invalid for channel " +
                                  std::to_string(k));
  }
  return rec;
}

// CSV layout: one sample is L rows of K comma-separated values; samples are
// separated by a blank line. An optional non-numeric header row is skipped.
// Values are written with 17 significant digits so round-trips are bit-exact.
inline void write_csv(const Dataset& ds, const std::string& path) {
  require_uniform(ds, "write_csv");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  char buf[40];
  const int K = ds.channels(), L = ds.horizon();
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    if (i > 0) out << "\n";
    const auto& v = ds.samples[i].values;
    for (int u = 0; u < L; ++u) {
      for (int k = 0; k < K; ++k) {
        std::snprintf(buf, sizeof(buf), "%.17g", v(k, u));
        out << (k ? "," : "") << buf;
      }
      out << "\n";
    }
  }
}

namespace detail {

inline bool parse_csv_row(const std::string& line, std::vector<double>& out, int lineno) {
  out.clear();
  std::size_t pos = 0;
  int col = 0;
  while (pos <= line.size()) {
    auto comma = line.find(',', pos);
    if (comma == std::string::npos) comma = line.size();
    ++col;
    const char* first = line.data() + pos;
    const char* last = line.data() + comma;
    while (first < last && (*first == ' ' || *first == '\t')) ++first;
    while (last > first && (*(last - 1) == ' ' || *(last - 1) == '\t' || *(last - 1) == '\r'))
      --last;
    double v = 0.0;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last || first == last) {
      if (lineno == 1) return false;  // tolerated as a header row
      throw std::invalid_argument("csv parse error at line " + std::to_string(lineno) +
                                  ", column " + std::to_string(col) + ": '" +
                                  std::string(first, last) + "'");
    }
    out.push_back(v);
    pos = comma + 1;
    if (comma == line.size()) break;
  }
  return true;
}

}  // namespace detail

inline Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open csv file: " + path);
  Dataset ds;
  std::vector<std::vector<double>> rows;
  std::vector<double> row;
  std::string line;
  int lineno = 0;

  auto flush_sample = [&]() {
    if (rows.empty()) return;
    const auto K = rows.front().size();
    TimeSeries ts(static_cast<int>(K), static_cast<int>(rows.size()));
    for (std::size_t u = 0; u < rows.size(); ++u)
      for (std::size_t k = 0; k < K; ++k) ts.values(static_cast<int>(k), static_cast<int>(u)) = rows[u][k];
    if (!ds.samples.empty()) require_same_shape(ts, ds.samples.front(), "read_csv");
    require_finite(ts, "read_csv");
    ds.samples.push_back(std::move(ts));
    rows.clear();
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::string stripped = line;
    if (!stripped.empty() && stripped.back() == '\r') stripped.pop_back();
    bool blank = true;
    for (char c : stripped)
      if (c != ' ' && c != '\t') { blank = false; break; }
    if (blank) {
      flush_sample();
      continue;
    }
    if (!detail::parse_csv_row(stripped, row, lineno)) continue;  // header skipped
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("csv ragged row at line " + std::to_string(lineno) +
                                  ": expected " + std::to_string(rows.front().size()) +
                                  " columns, got " + std::to_string(row.size()));
    rows.push_back(row);
  }
  flush_sample();
  if (ds.samples.empty()) throw std::invalid_argument("csv file contains no samples: " + path);
  return ds;
}

// Forward noising z_t = sqrt(ab_t) z0 + sqrt(1 - ab_t) eps.
inline TimeSeries forward_noise(const TimeSeries& z0, int t, const Schedule& s,
                                const TimeSeries& eps) {
  require_same_shape(z0, eps, "forward_noise");
  if (t < 1 || t > s.steps)
    throw std::invalid_argument("forward_noise: step index out of range: t=" +
                                std::to_string(t));
  const double ab = s.alpha_bar[t];
  TimeSeries out;
  out.values = std::sqrt(ab) * z0.values + std::sqrt(1.0 - ab) * eps.values;
  return out;
}

}  // namespace tsdiff

#endif  // TSDIFF_SERIES_HPP
