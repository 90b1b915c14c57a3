#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "linalg.hpp"
#include "parallel.hpp"
#include "tangency.hpp"

namespace bifocus {

inline double rigid_rotation(double theta, double omega) {
  return wrap_2pi(theta + two_pi() * omega);
}

enum class LengthLaw { Basel, Geometric };

struct DenjoyConfig {
  double omega = 0.6180339887498949;
  double theta0 = 0.0;
  double length_budget = 0.5;
  LengthLaw law = LengthLaw::Basel;
  double geometric_ratio = 0.5;
  int n_intervals = 1000;
};

inline double interval_length(int n, const DenjoyConfig& cfg) {
  if (cfg.law == LengthLaw::Basel) return 6.0 / (pi() * pi()) * cfg.length_budget / ((n + 1.0) * (n + 1.0));
  return cfg.length_budget * (1.0 - cfg.geometric_ratio) * std::pow(cfg.geometric_ratio, n);
}

inline void validate_denjoy(const DenjoyConfig& cfg) {
  if (!std::isfinite(cfg.omega) || !std::isfinite(cfg.theta0)) throw lab_error(errc::ParamViolation, "finite omega, theta0");
  if (!(cfg.length_budget > 0.0)) throw lab_error(errc::ParamViolation, "length_budget > 0");
  if (cfg.n_intervals < 100) throw lab_error(errc::ParamViolation, "n_intervals >= 100");
  if (cfg.law == LengthLaw::Geometric && !(cfg.geometric_ratio > 0.0 && cfg.geometric_ratio < 1.0))
    throw lab_error(errc::ParamViolation, "geometric ratio in (0,1)");
}

// Largest continued-fraction denominator reached before it exceeds the bound or the expansion terminates.
inline long long continued_fraction_denominator(double x, long long bound = 1000000) {
  x -= std::floor(x);
  long long q_prev = 0, q = 1;
  double rem = x;
  for (int it = 0; it < 64; ++it) {
    if (rem < 1e-12) return q;
    const double inv = 1.0 / rem;
    const double a = std::floor(inv);
    rem = inv - a;
    const double next = a * static_cast<double>(q) + static_cast<double>(q_prev);
    if (next > static_cast<double>(bound)) return static_cast<long long>(next);
    q_prev = q;
    q = static_cast<long long>(next);
  }
  return q;
}

struct InsertedInterval {
  int n = 0;          // orbit index
  double theta = 0;   // collapsed position
  double start = 0;   // left end on the blown-up circle
  double length = 0;
};

class DenjoyCircleMap {
 public:
  DenjoyCircleMap() = default;

  explicit DenjoyCircleMap(const DenjoyConfig& cfg) : cfg_(cfg) {
    validate_denjoy(cfg);
    irrational_surrogate_ = continued_fraction_denominator(cfg.omega) > 1000000;
    std::vector<double> theta;
    double th = wrap_2pi(cfg.theta0);
    for (int n = 0; n < cfg.n_intervals; ++n) {
      if (n > 0) {
        const double back = angle_distance(th, theta[0]);
        if (back <= 1e-12) {
          closed_ = true;
          break;
        }
        if (back < 1e-9) {
          char msg[96];
          std::snprintf(msg, sizeof msg, "orbit returns within %.3g of theta0 after %d steps", back, n);
          throw lab_error(errc::OverlapDetected, msg);
        }
      }
      theta.push_back(th);
      th = rigid_rotation(th, cfg.omega);
    }
    const int count = static_cast<int>(theta.size());
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return theta[a] < theta[b]; });
    for (int k = 0; k < count; ++k) {
      const int a = order[k], b = order[(k + 1) % count];
      double gap = theta[b] - theta[a];
      if (k + 1 == count) gap += two_pi();
      if (count > 1 && gap < 1e-13)
        throw lab_error(errc::OverlapDetected,
                        "orbit points " + std::to_string(a) + " and " + std::to_string(b) + " coincide");
    }
    sorted_.resize(count);
    by_index_.resize(count);
    double acc = 0.0;
    for (int k = 0; k < count; ++k) {
      const int n = order[k];
      const double len = interval_length(n, cfg);
      sorted_[k] = {n, theta[n], theta[n] + acc, len};
      by_index_[n] = k;
      acc += len;
    }
    inserted_length_ = acc;
    circumference_ = two_pi() + acc;
    angles_.resize(count);
    starts_.resize(count);
    for (int k = 0; k < count; ++k) {
      angles_[k] = sorted_[k].theta;
      starts_[k] = sorted_[k].start;
    }
  }

  const DenjoyConfig& config() const { return cfg_; }
  double circumference() const { return circumference_; }
  double inserted_length() const { return inserted_length_; }
  int interval_count() const { return static_cast<int>(sorted_.size()); }
  bool cycle_closed() const { return closed_; }
  bool irrational_surrogate() const { return irrational_surrogate_; }
  const InsertedInterval& interval(int n) const { return sorted_[by_index_.at(n)]; }
  const std::vector<InsertedInterval>& sorted_intervals() const { return sorted_; }

  double wrap(double s) const {
    double t = std::fmod(s, circumference_);
    if (t < 0) t += circumference_;
    if (t >= circumference_) t = 0.0;
    return t;
  }

  // Orbit index of the inserted interval containing s, if any.
  std::optional<int> interval_at(double s) const {
    const int k = left_neighbour(s);
    const auto& iv = sorted_[k];
    if (s >= iv.start && s < iv.start + iv.length) return iv.n;
    return std::nullopt;
  }

  double collapse(double s) const {
    s = wrap(s);
    const auto it = std::upper_bound(starts_.begin(), starts_.end(), s);
    if (it == starts_.begin()) return s;
    const std::size_t k = static_cast<std::size_t>(it - starts_.begin()) - 1;
    const auto& iv = sorted_[k];
    if (s < iv.start + iv.length) return iv.theta;
    return wrap_2pi(s - (iv.start + iv.length - iv.theta));
  }

  // Gap-side expansion: an orbit angle maps to the left end of its interval.
  double expand(double theta) const {
    theta = wrap_2pi(theta);
    const auto it = std::lower_bound(angles_.begin(), angles_.end(), theta);
    if (it == angles_.begin()) return theta;
    const std::size_t k = static_cast<std::size_t>(it - angles_.begin()) - 1;
    const auto& iv = sorted_[k];
    return iv.start + iv.length + (theta - iv.theta);
  }

  static double bridge(double x, double rho) {
    auto m = [rho](double y) { return rho * y / (1.0 + (rho - 1.0) * y); };
    if (x <= 0.5) return 0.5 * m(2.0 * x);
    return 1.0 - 0.5 * m(2.0 * (1.0 - x));
  }

  static double bridge_derivative(double x, double rho) {
    auto dm = [rho](double y) {
      const double d = 1.0 + (rho - 1.0) * y;
      return rho / (d * d);
    };
    if (x <= 0.5) return dm(2.0 * x);
    return dm(2.0 * (1.0 - x));
  }

  std::optional<int> successor(int n) const {
    if (n + 1 < interval_count()) return n + 1;
    if (closed_) return 0;
    return std::nullopt;
  }

  double operator()(double s) const {
    s = wrap(s);
    const int k = left_neighbour(s);
    const auto& iv = sorted_[k];
    const double right = iv.start + iv.length;
    const bool inside = s >= iv.start && s < right;
    const auto next = successor(iv.n);
    if (inside) {
      if (!next) return expand(rigid_rotation(iv.theta, cfg_.omega));
      const auto& nx = interval(*next);
      const double x = (s - iv.start) / iv.length;
      return wrap(nx.start + nx.length * bridge(x, iv.length / nx.length));
    }
    double d = s - right;
    if (d < 0) d += circumference_;
    if (next) {
      const auto& nx = interval(*next);
      const int kn = by_index_[*next];
      const auto& after = sorted_[(kn + 1) % interval_count()];
      double gap = after.start - (nx.start + nx.length);
      if (gap <= 0) gap += circumference_;
      if (d < gap) return wrap(nx.start + nx.length + d);
    }
    return wrap(expand(rigid_rotation(collapse(s), cfg_.omega)));
  }

  // Defined off the interval endpoints; 1 on gaps.
  double derivative(double s) const {
    s = wrap(s);
    const int k = left_neighbour(s);
    const auto& iv = sorted_[k];
    if (!(s >= iv.start && s < iv.start + iv.length)) return 1.0;
    const auto next = successor(iv.n);
    if (!next) return 0.0;
    const auto& nx = interval(*next);
    const double rho = iv.length / nx.length;
    return nx.length / iv.length * bridge_derivative((s - iv.start) / iv.length, rho);
  }

  double rotation_number_estimate(double s0, long n) const {
    double s = wrap(s0), total = 0.0;
    for (long k = 0; k < n; ++k) {
      const double t = (*this)(s);
      double step = t - s;
      if (step < 0) step += circumference_;
      total += step;
      s = t;
    }
    return total / (static_cast<double>(n) * circumference_);
  }

 private:
  int left_neighbour(double s) const {
    const auto it = std::upper_bound(starts_.begin(), starts_.end(), s);
    if (it == starts_.begin()) return interval_count() - 1;
    return static_cast<int>(it - starts_.begin()) - 1;
  }

  DenjoyConfig cfg_;
  std::vector<InsertedInterval> sorted_;
  std::vector<int> by_index_;
  std::vector<double> angles_, starts_;
  double inserted_length_ = 0, circumference_ = two_pi();
  bool closed_ = false;
  bool irrational_surrogate_ = false;
};

inline DenjoyCircleMap denjoy_surgery(const DenjoyConfig& cfg) { return DenjoyCircleMap(cfg); }

// ---------------------------------------------------------------- G_B

struct WanderingDomainSpec {
  int base_index = 0;
  double tube_radius = 0.05;
  int s_samples = 40;
  int angle_samples = 25;
};

struct GBPoint {
  double r = 0, s = 0, t = 0;
};

class GBMap {
 public:
  GBMap(DenjoyCircleMap circle, NormalFormParams nf) : circle_(std::move(circle)), nf_(nf) {
    if (!(nf_.mu > 0.0)) throw lab_error(errc::ParamViolation, "mu > 0 required for an attracting circle");
    if (!(nf_.a_mu > 0.0)) throw lab_error(errc::ParamViolation, "a_mu > 0");
    if (!std::isfinite(nf_.gamma)) throw lab_error(errc::ParamViolation, "finite gamma");
  }

  GBPoint operator()(const GBPoint& p) const {
    const NormalFormStep st = normal_form_map({p.r, 0.0, p.t}, radial_only());
    return {st.point.r, circle_(p.s), st.point.t};
  }

  Vec3<double> embed(const GBPoint& p) const {
    const double a = two_pi() * p.s / circle_.circumference();
    return {p.r * std::cos(a), p.r * std::sin(a), p.t};
  }

  double circle_radius() const { return std::sqrt(nf_.mu / nf_.a_mu); }
  const DenjoyCircleMap& circle() const { return circle_; }
  const NormalFormParams& normal_form() const { return nf_; }

 private:
  NormalFormParams radial_only() const {
    NormalFormParams q = nf_;
    q.beta_mu = 0.0;
    q.c2 = 0.0;
    return q;
  }

  DenjoyCircleMap circle_;
  NormalFormParams nf_;
};

inline GBMap build_gb(const DenjoyCircleMap& circle, const NormalFormParams& nf, const WanderingDomainSpec& spec) {
  if (!(spec.tube_radius > 0.0)) throw lab_error(errc::ParamViolation, "tube radius > 0");
  if (spec.base_index < 0 || spec.base_index >= circle.interval_count())
    throw lab_error(errc::ParamViolation, "base interval not inserted");
  return GBMap(circle, nf);
}

// Boundary of D_0: the tube of radius delta around the circle over the open base interval.
inline std::vector<GBPoint> tube_boundary_samples(const GBMap& gb, const WanderingDomainSpec& spec) {
  const auto& iv = gb.circle().interval(spec.base_index);
  const double rs = gb.circle_radius();
  std::vector<GBPoint> out;
  out.reserve(static_cast<std::size_t>(spec.s_samples) * spec.angle_samples);
  for (int i = 0; i < spec.s_samples; ++i) {
    const double s = iv.start + iv.length * (i + 0.5) / spec.s_samples;
    for (int k = 0; k < spec.angle_samples; ++k) {
      const double a = two_pi() * k / spec.angle_samples;
      out.push_back({rs + spec.tube_radius * std::cos(a), s, spec.tube_radius * std::sin(a)});
    }
  }
  return out;
}

struct WanderingFailure {
  errc code = errc::ContractionFailed;
  std::string detail;
};

struct WanderingReport {
  long n_iter = 0;
  std::size_t boundary_samples = 0;
  bool disjoint = false;
  double min_separation = 0;
  std::optional<std::pair<long, long>> offending_pair;
  bool contraction = false;
  bool diam_monotone = false;
  std::vector<double> diam_curve;
  std::optional<long> k_star;
  bool periodicity = false;  // true when no periodic behaviour was found
  std::optional<int> period_found;
  bool omega_limit_ok = false;
  std::vector<Vec3<double>> omega_limit_samples;
  std::optional<WanderingFailure> failure;

  bool passed() const { return !failure; }
};

struct WanderingConfig {
  long n_iter = 10000;
  int period_bound = 50;
  double margin = 1e-9;
  double contraction_threshold = 1e-3;
  double monotone_tol = 1e-9;
  int diameter_subsample = 100;
  int omega_samples = 100;
  int workers = 1;
};

inline WanderingReport verify_wandering(const GBMap& gb, const WanderingDomainSpec& spec, const WanderingConfig& cfg) {
  if (cfg.n_iter < 1000) throw lab_error(errc::ParamViolation, "n_iter >= 1000");
  const auto& circle = gb.circle();
  const double C = circle.circumference();
  const std::vector<GBPoint> samples = tube_boundary_samples(gb, spec);
  const std::size_t ns = samples.size();
  const std::size_t steps = static_cast<std::size_t>(cfg.n_iter) + 1;
  WanderingReport rep;
  rep.n_iter = cfg.n_iter;
  rep.boundary_samples = ns;

  // reference trajectory for arc offsets
  std::vector<double> ref(steps);
  {
    GBPoint p = samples[0];
    for (std::size_t k = 0; k < steps; ++k) {
      ref[k] = p.s;
      if (k + 1 < steps) p = gb(p);
    }
  }
  const std::size_t sub_stride = std::max<std::size_t>(1, ns / static_cast<std::size_t>(cfg.diameter_subsample));
  std::vector<std::size_t> sub;
  for (std::size_t i = 0; i < ns && sub.size() < static_cast<std::size_t>(cfg.diameter_subsample); i += sub_stride)
    sub.push_back(i);
  std::vector<Vec3<double>> sub_pos(sub.size() * steps);

  const int w = std::max(1, cfg.workers);
  std::vector<std::vector<double>> lo(w, std::vector<double>(steps, std::numeric_limits<double>::infinity()));
  std::vector<std::vector<double>> hi(w, std::vector<double>(steps, -std::numeric_limits<double>::infinity()));
  parallel_for(static_cast<std::size_t>(w), w, [&](std::size_t wi) {
    const std::size_t a = ns * wi / w, b = ns * (wi + 1) / w;
    for (std::size_t i = a; i < b; ++i) {
      const auto sit = std::find(sub.begin(), sub.end(), i);
      const std::ptrdiff_t slot = sit == sub.end() ? -1 : sit - sub.begin();
      GBPoint p = samples[i];
      for (std::size_t k = 0; k < steps; ++k) {
        double off = std::remainder(p.s - ref[k], C);
        lo[wi][k] = std::min(lo[wi][k], off);
        hi[wi][k] = std::max(hi[wi][k], off);
        if (slot >= 0) sub_pos[static_cast<std::size_t>(slot) * steps + k] = gb.embed(p);
        if (k + 1 < steps) p = gb(p);
      }
    }
  });
  struct Arc {
    double start, end;
    long k;
  };
  std::vector<Arc> arcs(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    double l = lo[0][k], h = hi[0][k];
    for (int wi = 1; wi < w; ++wi) {
      l = std::min(l, lo[wi][k]);
      h = std::max(h, hi[wi][k]);
    }
    const double start = circle.wrap(ref[k] + l);
    arcs[k] = {start, start + (h - l), static_cast<long>(k)};
  }

  // (i) disjointness of the angular shadows
  std::sort(arcs.begin(), arcs.end(), [](const Arc& x, const Arc& y) { return x.start < y.start || (x.start == y.start && x.k < y.k); });
  rep.min_separation = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < steps; ++k) {
    const Arc& x = arcs[k];
    const Arc& y = arcs[(k + 1) % steps];
    const double gap = (k + 1 < steps) ? y.start - x.end : y.start + C - x.end;
    if (gap < rep.min_separation) {
      rep.min_separation = gap;
      rep.offending_pair = std::make_pair(std::min(x.k, y.k), std::max(x.k, y.k));
    }
  }
  rep.disjoint = rep.min_separation > cfg.margin;
  if (rep.disjoint) rep.offending_pair.reset();

  // (ii) diameters
  rep.diam_curve.resize(steps);
  parallel_for(steps, w, [&](std::size_t k) {
    double d = 0.0;
    for (std::size_t a = 0; a < sub.size(); ++a)
      for (std::size_t b = a + 1; b < sub.size(); ++b)
        d = std::max(d, norm(sub_pos[a * steps + k] - sub_pos[b * steps + k]));
    rep.diam_curve[k] = d;
  });
  // increases below the rounding level of the embedded coordinates are not counted
  double coord_scale = 0.0;
  for (const auto& p : sub_pos) coord_scale = std::max(coord_scale, norm(p));
  const double floor_abs = 64.0 * std::numeric_limits<double>::epsilon() * coord_scale;
  rep.diam_monotone = true;
  for (std::size_t k = 0; k + 1 < steps; ++k)
    if (rep.diam_curve[k + 1] > rep.diam_curve[k] * (1.0 + cfg.monotone_tol) + floor_abs) rep.diam_monotone = false;
  for (std::size_t k = 0; k < steps; ++k)
    if (rep.diam_curve[k] < cfg.contraction_threshold) {
      rep.k_star = static_cast<long>(k);
      break;
    }
  rep.contraction = rep.diam_monotone && rep.k_star.has_value();

  // (iii) periodicity on omega-limit samples taken from the tail of the reference orbit
  const std::size_t tail_start = steps - std::max<std::size_t>(1, steps / 10);
  std::vector<std::pair<std::size_t, GBPoint>> omega;
  {
    GBPoint p = samples[0];
    const std::size_t tail_len = steps - tail_start;
    const std::size_t stride = std::max<std::size_t>(1, tail_len / static_cast<std::size_t>(cfg.omega_samples));
    for (std::size_t k = 0; k < steps; ++k) {
      if (k >= tail_start && (k - tail_start) % stride == 0 && omega.size() < static_cast<std::size_t>(cfg.omega_samples))
        omega.push_back({k, p});
      if (k + 1 < steps) p = gb(p);
    }
  }
  for (const auto& [k, p] : omega) rep.omega_limit_samples.push_back(gb.embed(p));
  std::vector<int> first_period(omega.size(), 0);
  parallel_for(omega.size(), w, [&](std::size_t i) {
    const Vec3<double> e0 = gb.embed(omega[i].second);
    GBPoint q = omega[i].second;
    for (int per = 1; per <= cfg.period_bound; ++per) {
      q = gb(q);
      if (norm(gb.embed(q) - e0) <= cfg.margin) {
        first_period[i] = per;
        return;
      }
    }
  });
  rep.periodicity = true;
  for (int per : first_period)
    if (per > 0 && (!rep.period_found || per < *rep.period_found)) rep.period_found = per;
  if (rep.period_found) rep.periodicity = false;

  // (iv) omega-limit samples must avoid early inserted intervals
  rep.omega_limit_ok = true;
  long bad_index = -1;
  std::size_t bad_time = 0;
  for (const auto& [k, p] : omega) {
    const auto n = circle.interval_at(p.s);
    if (n && static_cast<double>(*n) < 0.9 * static_cast<double>(cfg.n_iter)) {
      rep.omega_limit_ok = false;
      bad_index = *n;
      bad_time = k;
      break;
    }
  }

  if (!rep.periodicity)
    rep.failure = WanderingFailure{errc::PeriodicityDetected,
                                   "omega-limit sample returns within margin at period " + std::to_string(*rep.period_found)};
  else if (!rep.disjoint)
    rep.failure = WanderingFailure{errc::DisjointnessViolated,
                                   "images " + std::to_string(rep.offending_pair->first) + " and " +
                                       std::to_string(rep.offending_pair->second) + " overlap"};
  else if (!rep.contraction)
    rep.failure = WanderingFailure{errc::ContractionFailed,
                                   rep.diam_monotone ? "diameter stays above the contraction threshold"
                                                     : "diameter sequence increases"};
  else if (!rep.omega_limit_ok)
    rep.failure = WanderingFailure{errc::OmegaLimitInInterval, "sample at time " + std::to_string(bad_time) +
                                                                   " lies in interval " + std::to_string(bad_index)};
  return rep;
}

}  // namespace bifocus
