#ifndef TSDIFF_CONSTRAINTS_HPP
#define TSDIFF_CONSTRAINTS_HPP

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "tsdiff/series.hpp"

namespace tsdiff {

enum class ConstraintKind {
  mean,
  mean_consecutive_change,
  value_at_timestamp,
  value_at_argmax,
  value_at_argmin,
  argmax_location,
  argmin_location,
  ohlc,
  peak,
  valley,
  trend_segment,
  affine_inequality,
  affine_equality,
};

inline const char* kind_name(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::mean: return "mean";
    case ConstraintKind::mean_consecutive_change: return "mean_consecutive_change";
    case ConstraintKind::value_at_timestamp: return "value_at_timestamp";
    case ConstraintKind::value_at_argmax: return "value_at_argmax";
    case ConstraintKind::value_at_argmin: return "value_at_argmin";
    case ConstraintKind::argmax_location: return "argmax_location";
    case ConstraintKind::argmin_location: return "argmin_location";
    case ConstraintKind::ohlc: return "ohlc";
    case ConstraintKind::peak: return "peak";
    case ConstraintKind::valley: return "valley";
    case ConstraintKind::trend_segment: return "trend_segment";
    case ConstraintKind::affine_inequality: return "affine_inequality";
    case ConstraintKind::affine_equality: return "affine_equality";
  }
  return "?";
}

// One addend of a user-supplied affine row: coeff * z[channel][timestep].
struct AffineTerm {
  int channel = 0;
  int timestep = 0;
  double coeff = 0.0;
};

// A single constraint descriptor. Field usage depends on kind:
//   mean / mean_consecutive_change:    channel, target, threshold
//   value_at_timestamp:                channel, location, target, threshold
//   value_at_argmax / value_at_argmin: channel, target, threshold, optional
//                                      location (no location = evaluate at the
//                                      realized extremum; not affine)
//   argmax_location / argmin_location: channel, location
//   ohlc:                              ohlc_channels (open, high, low, close)
//   peak / valley:                     channel, location, optional target value
//   trend_segment:                     channel, seg_from..seg_to, direction +-1
//   affine_inequality / affine_equality: terms, target (rhs), threshold (eq)
// Timestamps/locations are 0-based here; config files use 1-based.
struct Constraint {
  ConstraintKind kind = ConstraintKind::mean;
  int channel = 0;
  double target = 0.0;
  bool has_target = true;
  int location = -1;
  int seg_from = -1;
  int seg_to = -1;
  int direction = 0;
  std::array<int, 4> ohlc_channels{{0, 1, 2, 3}};
  std::vector<AffineTerm> terms;
  double threshold = 0.005;
};

struct ConstraintSet {
  std::vector<Constraint> constraints;
  double budget = 0.01;

  bool empty() const { return constraints.empty(); }
  std::size_t size() const { return constraints.size(); }
};

inline Constraint mean_constraint(int channel, double target, double threshold = 0.005) {
  Constraint c;
  c.kind = ConstraintKind::mean;
  c.channel = channel;
  c.target = target;
  c.threshold = threshold;
  return c;
}

inline Constraint mean_change_constraint(int channel, double target,
                                         double threshold = 0.005) {
  Constraint c = mean_constraint(channel, target, threshold);
  c.kind = ConstraintKind::mean_consecutive_change;
  return c;
}

inline Constraint value_at_constraint(int channel, int timestep, double target,
                                      double threshold = 0.005) {
  Constraint c;
  c.kind = ConstraintKind::value_at_timestamp;
  c.channel = channel;
  c.location = timestep;
  c.target = target;
  c.threshold = threshold;
  return c;
}

inline Constraint value_at_argmax_constraint(int channel, double target, int location = -1,
                                             double threshold = 0.005) {
  Constraint c;
  c.kind = ConstraintKind::value_at_argmax;
  c.channel = channel;
  c.target = target;
  c.location = location;
  c.threshold = threshold;
  return c;
}

inline Constraint value_at_argmin_constraint(int channel, double target, int location = -1,
                                             double threshold = 0.005) {
  Constraint c = value_at_argmax_constraint(channel, target, location, threshold);
  c.kind = ConstraintKind::value_at_argmin;
  return c;
}

inline Constraint argmax_location_constraint(int channel, int location) {
  Constraint c;
  c.kind = ConstraintKind::argmax_location;
  c.channel = channel;
  c.location = location;
  c.has_target = false;
  c.threshold = 0.0;
  return c;
}

inline Constraint argmin_location_constraint(int channel, int location) {
  Constraint c = argmax_location_constraint(channel, location);
  c.kind = ConstraintKind::argmin_location;
  return c;
}

inline Constraint ohlc_constraint(int open = 0, int high = 1, int low = 2, int close = 3) {
  Constraint c;
  c.kind = ConstraintKind::ohlc;
  c.ohlc_channels = {open, high, low, close};
  c.has_target = false;
  c.threshold = 0.0;
  return c;
}

inline Constraint peak_constraint(int channel, int location) {
  Constraint c;
  c.kind = ConstraintKind::peak;
  c.channel = channel;
  c.location = location;
  c.has_target = false;
  c.threshold = 0.0;
  return c;
}

inline Constraint peak_constraint(int channel, int location, double value,
                                  double threshold = 0.005) {
  Constraint c = peak_constraint(channel, location);
  c.has_target = true;
  c.target = value;
  c.threshold = threshold;
  return c;
}

inline Constraint valley_constraint(int channel, int location) {
  Constraint c = peak_constraint(channel, location);
  c.kind = ConstraintKind::valley;
  return c;
}

inline Constraint valley_constraint(int channel, int location, double value,
                                    double threshold = 0.005) {
  Constraint c = peak_constraint(channel, location, value, threshold);
  c.kind = ConstraintKind::valley;
  return c;
}

inline Constraint trend_constraint(int channel, int from, int to, int direction) {
  Constraint c;
  c.kind = ConstraintKind::trend_segment;
  c.channel = channel;
  c.seg_from = from;
  c.seg_to = to;
  c.direction = direction;
  c.has_target = false;
  c.threshold = 0.0;
  return c;
}

inline Constraint affine_inequality_constraint(std::vector<AffineTerm> terms, double rhs) {
  Constraint c;
  c.kind = ConstraintKind::affine_inequality;
  c.terms = std::move(terms);
  c.target = rhs;
  c.threshold = 0.0;
  return c;
}

inline Constraint affine_equality_constraint(std::vector<AffineTerm> terms, double rhs,
                                             double threshold = 0.005) {
  Constraint c = affine_inequality_constraint(std::move(terms), rhs);
  c.kind = ConstraintKind::affine_equality;
  c.threshold = threshold;
  return c;
}

namespace detail {

inline void check_index(bool ok, const std::string& what, const Constraint& c) {
  if (!ok)
    throw std::invalid_argument(std::string("constraint ") + kind_name(c.kind) + ": " + what);
}

inline void validate_constraint(const Constraint& c, int K, int L) {
  using CK = ConstraintKind;
  check_index(c.threshold >= 0.0, "threshold must be nonnegative", c);
  const bool needs_channel = c.kind != CK::ohlc && c.kind != CK::affine_inequality &&
                             c.kind != CK::affine_equality;
  if (needs_channel) check_index(c.channel >= 0 && c.channel < K, "channel out of range", c);
  switch (c.kind) {
    case CK::mean:
      break;
    case CK::mean_consecutive_change:
      check_index(L >= 2, "horizon too short for consecutive changes", c);
      break;
    case CK::value_at_timestamp:
    case CK::argmax_location:
    case CK::argmin_location:
    case CK::peak:
    case CK::valley:
      check_index(c.location >= 0 && c.location < L, "timestamp out of range", c);
      break;
    case CK::value_at_argmax:
    case CK::value_at_argmin:
      if (c.location >= 0) check_index(c.location < L, "timestamp out of range", c);
      break;
    case CK::ohlc:
      check_index(K >= 2, "needs at least two channels", c);
      for (int ch : c.ohlc_channels)
        check_index(ch >= 0 && ch < K, "ohlc channel out of range", c);
      break;
    case CK::trend_segment:
      check_index(c.seg_from >= 0 && c.seg_to < L && c.seg_from < c.seg_to,
                  "segment bounds invalid", c);
      check_index(c.direction == 1 || c.direction == -1, "direction must be +1 or -1", c);
      break;
    case CK::affine_inequality:
    case CK::affine_equality:
      check_index(!c.terms.empty(), "needs at least one term", c);
      for (const auto& term : c.terms)
        check_index(term.channel >= 0 && term.channel < K && term.timestep >= 0 &&
                        term.timestep < L,
                    "term index out of range", c);
      break;
  }
}

inline double hinge(double x) { return x > 0.0 ? x : 0.0; }

// Shared evaluation core: equality-style parts contribute
// hinge(|deviation| - eq_slack), bound parts contribute hinge(f - bound_slack).
// The penalty function uses (threshold, 0); budgeted evaluation uses
// (budget, budget).
inline double constraint_violation_slack(const TimeSeries& z, const Constraint& c,
                                         double eq_slack, double bound_slack) {
  using CK = ConstraintKind;
  const auto& v = z.values;
  const int L = z.horizon();
  double total = 0.0;
  switch (c.kind) {
    case CK::mean:
      total += hinge(std::abs(v.row(c.channel).mean() - c.target) - eq_slack);
      break;
    case CK::mean_consecutive_change: {
      const double g = (v(c.channel, L - 1) - v(c.channel, 0)) / (L - 1);
      total += hinge(std::abs(g - c.target) - eq_slack);
      break;
    }
    case CK::value_at_timestamp:
      total += hinge(std::abs(v(c.channel, c.location) - c.target) - eq_slack);
      break;
    case CK::value_at_argmax: {
      if (c.location < 0) {
        total += hinge(std::abs(v.row(c.channel).maxCoeff() - c.target) - eq_slack);
      } else {
        total += hinge(std::abs(v(c.channel, c.location) - c.target) - eq_slack);
        for (int u = 0; u < L; ++u)
          if (u != c.location)
            total += hinge(v(c.channel, u) - v(c.channel, c.location) - bound_slack);
      }
      break;
    }
    case CK::value_at_argmin: {
      if (c.location < 0) {
        total += hinge(std::abs(v.row(c.channel).minCoeff() - c.target) - eq_slack);
      } else {
        total += hinge(std::abs(v(c.channel, c.location) - c.target) - eq_slack);
        for (int u = 0; u < L; ++u)
          if (u != c.location)
            total += hinge(v(c.channel, c.location) - v(c.channel, u) - bound_slack);
      }
      break;
    }
    case CK::argmax_location:
      for (int u = 0; u < L; ++u)
        if (u != c.location)
          total += hinge(v(c.channel, u) - v(c.channel, c.location) - bound_slack);
      break;
    case CK::argmin_location:
      for (int u = 0; u < L; ++u)
        if (u != c.location)
          total += hinge(v(c.channel, c.location) - v(c.channel, u) - bound_slack);
      break;
    case CK::ohlc: {
      const int o = c.ohlc_channels[0], h = c.ohlc_channels[1];
      const int l = c.ohlc_channels[2], cl = c.ohlc_channels[3];
      for (int u = 0; u < L; ++u) {
        total += hinge(v(o, u) - v(h, u) - bound_slack);
        total += hinge(v(cl, u) - v(h, u) - bound_slack);
        total += hinge(v(l, u) - v(o, u) - bound_slack);
        total += hinge(v(l, u) - v(cl, u) - bound_slack);
      }
      break;
    }
    case CK::peak: {
      const int j = c.location;
      if (j > 0) total += hinge(v(c.channel, j - 1) - v(c.channel, j) - bound_slack);
      if (j < L - 1) total += hinge(v(c.channel, j + 1) - v(c.channel, j) - bound_slack);
      if (c.has_target)
        total += hinge(std::abs(v(c.channel, j) - c.target) - eq_slack);
      break;
    }
    case CK::valley: {
      const int j = c.location;
      if (j > 0) total += hinge(v(c.channel, j) - v(c.channel, j - 1) - bound_slack);
      if (j < L - 1) total += hinge(v(c.channel, j) - v(c.channel, j + 1) - bound_slack);
      if (c.has_target)
        total += hinge(std::abs(v(c.channel, j) - c.target) - eq_slack);
      break;
    }
    case CK::trend_segment: {
      for (int u = c.seg_from; u < c.seg_to; ++u) {
        const double diff = v(c.channel, u + 1) - v(c.channel, u);
        total += hinge((c.direction == 1 ? -diff : diff) - bound_slack);
      }
      break;
    }
    case CK::affine_inequality:
    case CK::affine_equality: {
      double s = -c.target;
      for (const auto& term : c.terms) s += term.coeff * v(term.channel, term.timestep);
      if (c.kind == CK::affine_equality)
        total += hinge(std::abs(s) - eq_slack);
      else
        total += hinge(s - bound_slack);
      break;
    }
  }
  return total;
}

}  // namespace detail

// Penalty-function contribution of one constraint (threshold slack on
// equality-style parts, none on bound parts).
inline double constraint_violation(const TimeSeries& z, const Constraint& c) {
  detail::validate_constraint(c, z.channels(), z.horizon());
  return detail::constraint_violation_slack(z, c, c.threshold, 0.0);
}

// The penalty function: sum of per-constraint hinge contributions; zero
// exactly on the (threshold-slackened) feasible set.
inline double violation(const TimeSeries& z, const ConstraintSet& set) {
  double total = 0.0;
  for (const auto& c : set.constraints) total += constraint_violation(z, c);
  return total;
}

// Evaluation-time violations: per constraint, parts beyond the set budget
// (the projection threshold is not applied here).
inline Eigen::VectorXd per_constraint_violation(const TimeSeries& z,
                                                const ConstraintSet& set) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(set.constraints.size()));
  for (std::size_t i = 0; i < set.constraints.size(); ++i) {
    const auto& c = set.constraints[i];
    detail::validate_constraint(c, z.channels(), z.horizon());
    out[static_cast<Eigen::Index>(i)] =
        detail::constraint_violation_slack(z, c, set.budget, set.budget);
  }
  return out;
}

// Affine view A z (<=|=) b over the flattened sample (channel-major,
// flat[k*L+u]); equality rows carry the originating constraint's threshold.
struct AffineSystem {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  std::vector<char> is_equality;
  Eigen::VectorXd row_threshold;
  int channels = 0;
  int horizon = 0;

  int rows() const { return static_cast<int>(A.rows()); }
  int cols() const { return static_cast<int>(A.cols()); }
  bool equality_only() const {
    for (char e : is_equality)
      if (!e) return false;
    return !is_equality.empty();
  }
};

namespace detail {

struct RowBuilder {
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  std::vector<char> eq;
  std::vector<double> thr;
  int K, L;

  RowBuilder(int K_, int L_) : K(K_), L(L_) {}
  Eigen::Index idx(int ch, int u) const { return static_cast<Eigen::Index>(ch) * L + u; }

  void add_ineq(std::initializer_list<std::pair<std::pair<int, int>, double>> entries,
                double b) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K) * L);
    for (const auto& [pos, coeff] : entries) row[idx(pos.first, pos.second)] += coeff;
    rows.push_back(std::move(row));
    rhs.push_back(b);
    eq.push_back(0);
    thr.push_back(0.0);
  }

  void add_eq(const Eigen::VectorXd& row, double b, double threshold) {
    rows.push_back(row);
    rhs.push_back(b);
    eq.push_back(1);
    thr.push_back(threshold);
  }
};

}  // namespace detail

// Compiles every constraint to affine rows over the flattened sample. Kinds
// whose extremum location is not fixed cannot be expressed and are rejected.
inline AffineSystem compile_affine(const ConstraintSet& set, int K, int L) {
  using CK = ConstraintKind;
  if (set.constraints.empty())
    throw std::invalid_argument("compile_affine: empty constraint set");
  detail::RowBuilder rb(K, L);
  const Eigen::Index n = static_cast<Eigen::Index>(K) * L;

  auto location_rows = [&](int ch, int j, bool is_max) {
    for (int u = 0; u < L; ++u) {
      if (u == j) continue;
      if (is_max)
        rb.add_ineq({{{ch, u}, 1.0}, {{ch, j}, -1.0}}, 0.0);
      else
        rb.add_ineq({{{ch, j}, 1.0}, {{ch, u}, -1.0}}, 0.0);
    }
  };
  auto unit_eq = [&](int ch, int j, double target, double threshold) {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
    row[rb.idx(ch, j)] = 1.0;
    rb.add_eq(row, target, threshold);
  };

  for (std::size_t i = 0; i < set.constraints.size(); ++i) {
    const Constraint& c = set.constraints[i];
    detail::validate_constraint(c, K, L);
    switch (c.kind) {
      case CK::mean: {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        for (int u = 0; u < L; ++u) row[rb.idx(c.channel, u)] = 1.0 / L;
        rb.add_eq(row, c.target, c.threshold);
        break;
      }
      case CK::mean_consecutive_change: {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        row[rb.idx(c.channel, 0)] = -1.0 / (L - 1);
        row[rb.idx(c.channel, L - 1)] = 1.0 / (L - 1);
        rb.add_eq(row, c.target, c.threshold);
        break;
      }
      case CK::value_at_timestamp:
        unit_eq(c.channel, c.location, c.target, c.threshold);
        break;
      case CK::value_at_argmax:
      case CK::value_at_argmin: {
        if (c.location < 0)
          throw std::invalid_argument(
              std::string("compile_affine: constraint ") + std::to_string(i) + " (" +
              kind_name(c.kind) + ") has no fixed location and is not affine-expressible");
        unit_eq(c.channel, c.location, c.target, c.threshold);
        location_rows(c.channel, c.location, c.kind == CK::value_at_argmax);
        break;
      }
      case CK::argmax_location:
        location_rows(c.channel, c.location, true);
        break;
      case CK::argmin_location:
        location_rows(c.channel, c.location, false);
        break;
      case CK::ohlc: {
        const int o = c.ohlc_channels[0], h = c.ohlc_channels[1];
        const int l = c.ohlc_channels[2], cl = c.ohlc_channels[3];
        for (int u = 0; u < L; ++u) {
          rb.add_ineq({{{o, u}, 1.0}, {{h, u}, -1.0}}, 0.0);
          rb.add_ineq({{{cl, u}, 1.0}, {{h, u}, -1.0}}, 0.0);
          rb.add_ineq({{{l, u}, 1.0}, {{o, u}, -1.0}}, 0.0);
          rb.add_ineq({{{l, u}, 1.0}, {{cl, u}, -1.0}}, 0.0);
        }
        break;
      }
      case CK::peak: {
        const int j = c.location;
        if (j > 0) rb.add_ineq({{{c.channel, j - 1}, 1.0}, {{c.channel, j}, -1.0}}, 0.0);
        if (j < L - 1)
          rb.add_ineq({{{c.channel, j + 1}, 1.0}, {{c.channel, j}, -1.0}}, 0.0);
        if (c.has_target) unit_eq(c.channel, j, c.target, c.threshold);
        break;
      }
      case CK::valley: {
        const int j = c.location;
        if (j > 0) rb.add_ineq({{{c.channel, j}, 1.0}, {{c.channel, j - 1}, -1.0}}, 0.0);
        if (j < L - 1)
          rb.add_ineq({{{c.channel, j}, 1.0}, {{c.channel, j + 1}, -1.0}}, 0.0);
        if (c.has_target) unit_eq(c.channel, j, c.target, c.threshold);
        break;
      }
      case CK::trend_segment: {
        for (int u = c.seg_from; u < c.seg_to; ++u) {
          if (c.direction == 1)
            rb.add_ineq({{{c.channel, u}, 1.0}, {{c.channel, u + 1}, -1.0}}, 0.0);
          else
            rb.add_ineq({{{c.channel, u + 1}, 1.0}, {{c.channel, u}, -1.0}}, 0.0);
        }
        break;
      }
      case CK::affine_inequality:
      case CK::affine_equality: {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        for (const auto& term : c.terms) row[rb.idx(term.channel, term.timestep)] += term.coeff;
        if (c.kind == CK::affine_equality)
          rb.add_eq(row, c.target, c.threshold);
        else {
          rb.rows.push_back(std::move(row));
          rb.rhs.push_back(c.target);
          rb.eq.push_back(0);
          rb.thr.push_back(0.0);
        }
        break;
      }
    }
  }

  AffineSystem sys;
  sys.channels = K;
  sys.horizon = L;
  const auto m = static_cast<Eigen::Index>(rb.rows.size());
  sys.A.resize(m, n);
  sys.b.resize(m);
  sys.row_threshold.resize(m);
  sys.is_equality = rb.eq;
  for (Eigen::Index r = 0; r < m; ++r) {
    sys.A.row(r) = rb.rows[r];
    sys.b[r] = rb.rhs[r];
    sys.row_threshold[r] = rb.thr[r];
  }
  return sys;
}

// Penalty value of the compiled system; matches violation() on the source set.
inline double affine_violation(const Eigen::VectorXd& zflat, const AffineSystem& sys) {
  const Eigen::VectorXd r = sys.A * zflat - sys.b;
  double total = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (sys.is_equality[i])
      total += detail::hinge(std::abs(r[i]) - sys.row_threshold[i]);
    else
      total += detail::hinge(r[i]);
  }
  return total;
}

// Subgradient of affine_violation; zero on inactive rows and at the hinge
// kink (inactive-side convention), so feasible points are stationary.
inline Eigen::VectorXd affine_violation_subgradient(const Eigen::VectorXd& zflat,
                                                    const AffineSystem& sys) {
  const Eigen::VectorXd r = sys.A * zflat - sys.b;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(zflat.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (sys.is_equality[i]) {
      if (std::abs(r[i]) > sys.row_threshold[i])
        g += (r[i] > 0.0 ? 1.0 : -1.0) * sys.A.row(i).transpose();
    } else if (r[i] > 0.0) {
      g += sys.A.row(i).transpose();
    }
  }
  return g;
}

// ---- JSON serialization -----------------------------------------------------
// Timestamps ("timestamp", "from", "to") are 1-based in files.

inline nlohmann::json constraint_to_json(const Constraint& c) {
  using CK = ConstraintKind;
  nlohmann::json j;
  j["kind"] = kind_name(c.kind);
  switch (c.kind) {
    case CK::mean:
    case CK::mean_consecutive_change:
      j["channel"] = c.channel;
      j["target"] = c.target;
      j["threshold"] = c.threshold;
      break;
    case CK::value_at_timestamp:
      j["channel"] = c.channel;
      j["timestamp"] = c.location + 1;
      j["target"] = c.target;
      j["threshold"] = c.threshold;
      break;
    case CK::value_at_argmax:
    case CK::value_at_argmin:
      j["channel"] = c.channel;
      j["target"] = c.target;
      j["threshold"] = c.threshold;
      if (c.location >= 0) j["timestamp"] = c.location + 1;
      break;
    case CK::argmax_location:
    case CK::argmin_location:
      j["channel"] = c.channel;
      j["timestamp"] = c.location + 1;
      break;
    case CK::ohlc:
      j["channels"] = c.ohlc_channels;
      break;
    case CK::peak:
    case CK::valley:
      j["channel"] = c.channel;
      j["timestamp"] = c.location + 1;
      if (c.has_target) {
        j["value"] = c.target;
        j["threshold"] = c.threshold;
      }
      break;
    case CK::trend_segment:
      j["channel"] = c.channel;
      j["from"] = c.seg_from + 1;
      j["to"] = c.seg_to + 1;
      j["direction"] = c.direction == 1 ? "up" : "down";
      break;
    case CK::affine_inequality:
    case CK::affine_equality: {
      nlohmann::json terms = nlohmann::json::array();
      for (const auto& term : c.terms)
        terms.push_back({{"channel", term.channel},
                         {"timestamp", term.timestep + 1},
                         {"coeff", term.coeff}});
      j["terms"] = std::move(terms);
      j["rhs"] = c.target;
      if (c.kind == CK::affine_equality) j["threshold"] = c.threshold;
      break;
    }
  }
  return j;
}

inline Constraint constraint_from_json(const nlohmann::json& j) {
  using CK = ConstraintKind;
  if (!j.contains("kind")) throw std::invalid_argument("constraint entry missing 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  auto get_ts = [&](const char* key) { return j.at(key).get<int>() - 1; };
  auto thr = [&](double fallback) { return j.value("threshold", fallback); };
  if (kind == "mean")
    return mean_constraint(j.value("channel", 0), j.at("target").get<double>(), thr(0.005));
  if (kind == "mean_consecutive_change")
    return mean_change_constraint(j.value("channel", 0), j.at("target").get<double>(),
                                  thr(0.005));
  if (kind == "value_at_timestamp")
    return value_at_constraint(j.value("channel", 0), get_ts("timestamp"),
                               j.at("target").get<double>(), thr(0.005));
  if (kind == "value_at_argmax" || kind == "value_at_argmin") {
    const int loc = j.contains("timestamp") ? get_ts("timestamp") : -1;
    auto c = value_at_argmax_constraint(j.value("channel", 0), j.at("target").get<double>(),
                                        loc, thr(0.005));
    if (kind == "value_at_argmin") c.kind = CK::value_at_argmin;
    return c;
  }
  if (kind == "argmax_location")
    return argmax_location_constraint(j.value("channel", 0), get_ts("timestamp"));
  if (kind == "argmin_location")
    return argmin_location_constraint(j.value("channel", 0), get_ts("timestamp"));
  if (kind == "ohlc") {
    const auto ch = j.value("channels", std::array<int, 4>{{0, 1, 2, 3}});
    return ohlc_constraint(ch[0], ch[1], ch[2], ch[3]);
  }
  if (kind == "peak" || kind == "valley") {
    Constraint c = kind == "peak"
                       ? peak_constraint(j.value("channel", 0), get_ts("timestamp"))
                       : valley_constraint(j.value("channel", 0), get_ts("timestamp"));
    if (j.contains("value")) {
      c.has_target = true;
      c.target = j.at("value").get<double>();
      c.threshold = thr(0.005);
    }
    return c;
  }
  if (kind == "trend_segment") {
    const std::string dir = j.at("direction").get<std::string>();
    if (dir != "up" && dir != "down")
      throw std::invalid_argument("trend_segment direction must be 'up' or 'down'");
    return trend_constraint(j.value("channel", 0), get_ts("from"), get_ts("to"),
                            dir == "up" ? 1 : -1);
  }
  if (kind == "affine_inequality" || kind == "affine_equality") {
    std::vector<AffineTerm> terms;
    for (const auto& tj : j.at("terms")) {
      AffineTerm term;
      term.channel = tj.value("channel", 0);
      term.timestep = tj.at("timestamp").get<int>() - 1;
      term.coeff = tj.at("coeff").get<double>();
      terms.push_back(term);
    }
    if (kind == "affine_equality")
      return affine_equality_constraint(std::move(terms), j.at("rhs").get<double>(),
                                        thr(0.005));
    return affine_inequality_constraint(std::move(terms), j.at("rhs").get<double>());
  }
  throw std::invalid_argument("unknown constraint kind: '" + kind + "'");
}

inline nlohmann::json constraint_set_to_json(const ConstraintSet& set) {
  nlohmann::json j;
  j["budget"] = set.budget;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : set.constraints) arr.push_back(constraint_to_json(c));
  j["constraints"] = std::move(arr);
  return j;
}

inline ConstraintSet constraint_set_from_json(const nlohmann::json& j) {
  ConstraintSet set;
  set.budget = j.value("budget", 0.01);
  if (set.budget < 0.0) throw std::invalid_argument("budget must be nonnegative");
  if (!j.contains("constraints") || !j.at("constraints").is_array())
    throw std::invalid_argument("constraint file needs a 'constraints' array");
  for (const auto& cj : j.at("constraints")) set.constraints.push_back(constraint_from_json(cj));
  return set;
}

inline void save_constraint_set(const ConstraintSet& set, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write constraint file: " + path);
  out << constraint_set_to_json(set).dump(2) << "\n";
}

inline ConstraintSet load_constraint_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open constraint file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("constraint file parse error: " + std::string(e.what()));
  }
  return constraint_set_from_json(j);
}

}  // namespace tsdiff

#endif  // TSDIFF_CONSTRAINTS_HPP
