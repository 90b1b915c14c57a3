#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "linalg.hpp"
#include "lyapunov.hpp"
#include "parallel.hpp"
#include "precision.hpp"
#include "return_map.hpp"

namespace bifocus {

struct SlabConfig {
  double eta = 0.0;
  double eps_out = 0.5;
  double c_out = 0.9;
  double eps_in = 0.5;
  int N_min = 1;
  int N_max = 1000;
};

struct SlabIndex {
  int N = 0;
  double a_N = 0, a_N1 = 0;
  double b_N = 0, b_N1 = 0;
};

inline int admissible_min_index(const BifocusParams& p, const SlabConfig& cfg) {
  const double v = -(p.omega2 * std::log(cfg.c_out) / p.alpha2 + cfg.eta) / two_pi();
  return static_cast<int>(std::ceil(v));
}

inline void validate_slab_config(const BifocusParams& p, const SlabConfig& cfg) {
  if (!(cfg.eps_out > 0.0 && cfg.eps_out <= 1.0)) throw lab_error(errc::ParamViolation, "eps_out in (0,1]");
  if (!(cfg.eps_in > 0.0 && cfg.eps_in <= 1.0)) throw lab_error(errc::ParamViolation, "eps_in in (0,1]");
  if (!(cfg.c_out > 0.0 && cfg.c_out <= 1.0)) throw lab_error(errc::ParamViolation, "c_out in (0,1]");
  if (!(cfg.eta >= 0.0 && cfg.eta <= two_pi())) throw lab_error(errc::ParamViolation, "eta in [0, 2pi]");
  if (cfg.N_min < admissible_min_index(p, cfg)) throw lab_error(errc::InadmissibleIndex, "N_min below admissibility bound");
  if (cfg.N_max < cfg.N_min) throw lab_error(errc::ParamViolation, "N_max >= N_min");
}

// exponents of a_N and b_N
inline double log_a_radius(int N, const BifocusParams& p, const SlabConfig& cfg) {
  return -p.alpha1 * (cfg.eta + two_pi() * N) / p.omega2;
}

inline double log_b_radius(int N, const BifocusParams& p, const SlabConfig& cfg) {
  return -p.alpha2 * (cfg.eta + two_pi() * N) / p.omega2;
}

template <class T>
T b_radius(int N, const BifocusParams& p, const SlabConfig& cfg) {
  using std::exp;
  return exp(-T(p.alpha2) * (T(cfg.eta) + two_pi<T>() * N) / T(p.omega2));
}

inline SlabIndex slab_radii(int N, const BifocusParams& p, const SlabConfig& cfg) {
  if (N < admissible_min_index(p, cfg)) throw lab_error(errc::InadmissibleIndex, "N below admissibility bound");
  return {N, std::exp(log_a_radius(N, p, cfg)), std::exp(log_a_radius(N + 1, p, cfg)),
          std::exp(log_b_radius(N, p, cfg)), std::exp(log_b_radius(N + 1, p, cfg))};
}

struct Tec2Scan {
  int N0 = 0;
  std::vector<int> equal_at;  // indices where b_{N+1} = a_N within rounding
};

// Scans b_{N+1} > a_N on exponents; near-equal exponents (relative 1e-12) count as equality.
inline Tec2Scan tec2_scan(const BifocusParams& p, const SlabConfig& cfg) {
  validate_params(p);
  Tec2Scan out;
  int last_fail = -1;
  for (int N = 0; N <= cfg.N_max; ++N) {
    const double eb = log_b_radius(N + 1, p, cfg);
    const double ea = log_a_radius(N, p, cfg);
    const double tol = 1e-12 * std::max({std::fabs(ea), std::fabs(eb), 1.0});
    const double gap = eb - ea;
    if (std::fabs(gap) <= tol) out.equal_at.push_back(N);
    if (!(gap > tol)) last_fail = N;
  }
  if (last_fail >= cfg.N_max) throw lab_error(errc::NotFound, "condition fails at N_max");
  out.N0 = std::max(0, last_fail);
  return out;
}

inline int min_index_tec2(const BifocusParams& p, const SlabConfig& cfg) {
  return tec2_scan(p, cfg).N0;
}

// Threshold from alpha1 (eta + 2 pi N) > alpha2 (eta + 2 pi (N + 1)).
inline int min_index_tec2_closed_form(const BifocusParams& p, const SlabConfig& cfg) {
  const double d = p.alpha1 - p.alpha2;
  const double t = (two_pi() * p.alpha2 - cfg.eta * d) / (two_pi() * d);
  return std::max(0, static_cast<int>(std::floor(t + 1e-9)));
}

struct Symbol {
  int N = 0;
  int k = 1;  // 1: Y > 0, 2: Y < 0

  bool operator==(const Symbol& o) const { return N == o.N && k == o.k; }
};

struct Itinerary {
  std::vector<Symbol> word;
  bool periodic = true;
};

inline std::string itinerary_string(const Itinerary& it) {
  std::string s;
  for (std::size_t i = 0; i < it.word.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(it.word[i].N) + ":" + std::to_string(it.word[i].k);
  }
  return s;
}

template <class T>
T spiral_coordinate(const Vec3<T>& p, const BifocusParams& params) {
  using std::atan2;
  using std::log;
  const T s = p.x * p.x + p.y * p.y;
  return wrap_pi(atan2(p.y, p.x) - T(params.omega2 / params.alpha2) * log(s) / 2);
}

template <class T>
int branch_of(const Vec3<T>& p) {
  if (p.y > 0) return 1;
  if (p.y < 0) return 2;
  return 0;
}

inline int slab_index_of(double log_r, const BifocusParams& p, const SlabConfig& cfg) {
  return static_cast<int>(std::floor((-p.omega2 * log_r / p.alpha2 - cfg.eta) / two_pi()));
}

template <class T>
bool in_slab(const Vec3<T>& p, int N, const BifocusParams& params, const SlabConfig& cfg) {
  using std::abs;
  using std::log;
  const T s = p.x * p.x + p.y * p.y;
  if (!(s > 0)) return false;
  const T lr = log(s) / 2;
  if (lr > T(log_b_radius(N, params, cfg)) || lr < T(log_b_radius(N + 1, params, cfg))) return false;
  if (abs(p.z) > T(cfg.eps_in)) return false;
  return abs(spiral_coordinate(p, params)) <= T(cfg.eps_out);
}

template <class T>
bool matches_symbol(const Vec3<T>& p, const Symbol& sym, const BifocusParams& params, const SlabConfig& cfg) {
  return branch_of(p) == sym.k && in_slab(p, sym.N, params, cfg);
}

// ---------------------------------------------------------------- intersections

struct IntersectionComponent {
  std::size_t cells = 0;
  int branch = 0;
  double sigma_min = 0, sigma_max = 0;  // spiral coordinate of the images
  double sigma_step = 0;
  bool touches_lower = false, touches_upper = false;
  RectPoint source_centroid;
  RectPoint image_centroid;

  bool full_intersection() const { return touches_lower && touches_upper; }
};

struct IntersectionResult {
  int i = 0, j = 0;
  int resolution = 0;
  std::vector<IntersectionComponent> components;
  std::optional<int> doubled_count;

  int count() const { return static_cast<int>(components.size()); }
  bool empty() const { return components.empty(); }
};

struct IntersectionOptions {
  int resolution = 128;
  bool verify_doubling = true;
  int workers = 1;
};

namespace detail {

struct SourceGrid {
  int n = 0;
  double log_r_lo = 0, log_r_hi = 0;
  double z_half = 0;
  std::vector<double> phi;  // spiral-coordinate axis

  double log_r(int i1) const { return log_r_lo + (i1 + 0.5) / n * (log_r_hi - log_r_lo); }
  double z(int i3) const { return -z_half + (i3 + 0.5) / n * 2.0 * z_half; }
};

inline RectPoint source_point(double log_r, double phi, double z, const BifocusParams& p) {
  const double r = std::exp(log_r);
  const double theta = phi + p.omega2 / p.alpha2 * log_r;
  return {r * std::cos(theta), r * std::sin(theta), z};
}

// Spiral-coordinate axis: log-spaced on both sides of the value whose image lies closest to W^s_loc.
inline std::vector<double> spiral_axis(int n, int i, int j, const BifocusParams& p, const GlobalMapModel& model,
                                       const SlabConfig& cfg) {
  const double eps = cfg.eps_out;
  const double lr_mid = 0.5 * (log_b_radius(i, p, cfg) + log_b_radius(i + 1, p, cfg));
  auto image_radius = [&](double phi) {
    RectPoint q = return_map(source_point(lr_mid, phi, 0.0, p), p, model);
    return std::hypot(q.x, q.y);
  };
  const int m = 4001;
  int best = 0;
  double best_v = image_radius(-eps);
  for (int k = 1; k < m; ++k) {
    const double v = image_radius(-eps + 2.0 * eps * k / (m - 1));
    if (v < best_v) { best_v = v; best = k; }
  }
  double lo = -eps + 2.0 * eps * std::max(0, best - 1) / (m - 1);
  double hi = -eps + 2.0 * eps * std::min(m - 1, best + 1) / (m - 1);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 200; ++it) {
    const double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
    if (image_radius(a) < image_radius(b)) hi = b; else lo = a;
  }
  const double phi_c = 0.5 * (lo + hi);
  const double bj = std::exp(log_b_radius(j, p, cfg));
  const double bj1 = std::exp(log_b_radius(j + 1, p, cfg));
  const double h = std::min(bj, 0.5 * eps);
  const double probe = phi_c + h <= eps ? phi_c + h : phi_c - h;
  double slope = std::fabs(image_radius(probe) - image_radius(phi_c)) / h;
  double d_min = slope > 0.0 && std::isfinite(slope) ? 0.1 * bj1 / slope : 1e-3 * eps;
  d_min = std::min(d_min, 1e-3 * eps);

  std::vector<double> axis;
  axis.reserve(n);
  const double len_neg = phi_c + eps, len_pos = eps - phi_c;
  int n_neg = n / 2, n_pos = n - n / 2;
  if (len_neg <= 2.0 * d_min) { n_pos = n; n_neg = 0; }
  if (len_pos <= 2.0 * d_min) { n_neg = n; n_pos = 0; }
  // cells concentrate on the offsets whose image reaches the target annulus
  const double r_lo = bj1 / std::exp(1.0), r_hi = bj * std::exp(1.0);
  auto side = [&](int cnt, double len, double sign, std::vector<double>& out) {
    if (len <= 2.0 * d_min) {
      for (int k = 0; k < cnt; ++k) out.push_back((k + 0.5) / cnt * len);
      return;
    }
    double l0 = std::log(d_min), l1 = std::log(len);
    const int probes = 4001;
    double hit_lo = std::numeric_limits<double>::infinity(), hit_hi = -hit_lo;
    for (int k = 0; k < probes; ++k) {
      const double l = l0 + (l1 - l0) * k / (probes - 1);
      const double rr = image_radius(phi_c + sign * std::exp(l));
      if (rr >= r_lo && rr <= r_hi) {
        hit_lo = std::min(hit_lo, l - (l1 - l0) / (probes - 1));
        hit_hi = std::max(hit_hi, l + (l1 - l0) / (probes - 1));
      }
    }
    if (hit_lo < hit_hi) {
      l0 = std::max(l0, hit_lo);
      l1 = std::min(l1, hit_hi);
    }
    for (int k = 0; k < cnt; ++k) out.push_back(std::exp(l0 + (k + 0.5) / cnt * (l1 - l0)));
  };
  std::vector<double> dn, dp;
  side(n_neg, len_neg, -1.0, dn);
  side(n_pos, len_pos, 1.0, dp);
  for (int k = n_neg - 1; k >= 0; --k) axis.push_back(phi_c - dn[k]);
  for (int k = 0; k < n_pos; ++k) axis.push_back(phi_c + dp[k]);
  return axis;
}

inline std::vector<IntersectionComponent> scan_components(int i, int j, const BifocusParams& p,
                                                          const GlobalMapModel& model, const SlabConfig& cfg,
                                                          int n, int workers) {
  SourceGrid g;
  g.n = n;
  g.log_r_lo = log_b_radius(i + 1, p, cfg);
  g.log_r_hi = log_b_radius(i, p, cfg);
  g.z_half = cfg.eps_in;
  g.phi = spiral_axis(n, i, j, p, model, cfg);
  const std::size_t nn = static_cast<std::size_t>(n);
  std::vector<std::uint8_t> mask(nn * nn * nn, 0);
  auto idx = [nn](std::size_t a, std::size_t b, std::size_t c) { return (a * nn + b) * nn + c; };
  auto image_of = [&](std::size_t a, std::size_t b, std::size_t c) {
    return return_map(source_point(g.log_r(static_cast<int>(a)), g.phi[b], g.z(static_cast<int>(c)), p), p, model);
  };
  parallel_for(nn, workers, [&](std::size_t a) {
    for (std::size_t b = 0; b < nn; ++b)
      for (std::size_t c = 0; c < nn; ++c) {
        RectPoint q = image_of(a, b, c);
        if (in_slab(q, j, p, cfg)) mask[idx(a, b, c)] = 1;
      }
  });

  std::vector<IntersectionComponent> comps;
  std::vector<std::size_t> queue;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (mask[start] != 1) continue;
    IntersectionComponent comp;
    comp.sigma_min = 1e300;
    comp.sigma_max = -1e300;
    long pos_branch = 0, neg_branch = 0;
    RectPoint src_sum{}, img_sum{};
    queue.clear();
    queue.push_back(start);
    mask[start] = 2;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const std::size_t cell = queue[h];
      const std::size_t a = cell / (nn * nn), b = (cell / nn) % nn, c = cell % nn;
      const RectPoint src = source_point(g.log_r(static_cast<int>(a)), g.phi[b], g.z(static_cast<int>(c)), p);
      const RectPoint q = return_map(src, p, model);
      const double sigma = spiral_coordinate(q, p);
      comp.sigma_min = std::min(comp.sigma_min, sigma);
      comp.sigma_max = std::max(comp.sigma_max, sigma);
      if (q.y > 0) ++pos_branch; else ++neg_branch;
      src_sum += src;
      img_sum += q;
      ++comp.cells;
      if (b + 1 < nn && mask[idx(a, b + 1, c)]) {
        const double s2 = spiral_coordinate(image_of(a, b + 1, c), p);
        comp.sigma_step = std::max(comp.sigma_step, std::fabs(s2 - sigma));
      }
      const long da[6] = {-1, 1, 0, 0, 0, 0}, db[6] = {0, 0, -1, 1, 0, 0}, dc[6] = {0, 0, 0, 0, -1, 1};
      for (int k = 0; k < 6; ++k) {
        const long na = static_cast<long>(a) + da[k], nb = static_cast<long>(b) + db[k],
                   nc = static_cast<long>(c) + dc[k];
        if (na < 0 || nb < 0 || nc < 0 || na >= n || nb >= n || nc >= n) continue;
        const std::size_t ni = idx(na, nb, nc);
        if (mask[ni] == 1) {
          mask[ni] = 2;
          queue.push_back(ni);
        }
      }
    }
    comp.branch = pos_branch >= neg_branch ? 1 : 2;
    const double inv = 1.0 / static_cast<double>(comp.cells);
    comp.source_centroid = inv * src_sum;
    comp.image_centroid = inv * img_sum;
    const double tol = comp.sigma_step;
    comp.touches_lower = comp.sigma_min <= -cfg.eps_out + tol;
    comp.touches_upper = comp.sigma_max >= cfg.eps_out - tol;
    comps.push_back(comp);
  }
  std::stable_sort(comps.begin(), comps.end(),
                   [](const IntersectionComponent& x, const IntersectionComponent& y) { return x.branch < y.branch; });
  return comps;
}

}  // namespace detail

inline IntersectionResult intersection_components(int i, int j, const BifocusParams& p, const GlobalMapModel& model,
                                                  const SlabConfig& cfg, const IntersectionOptions& opt = {}) {
  validate_params(p);
  if (opt.resolution < 64) throw lab_error(errc::ResolutionTooCoarse, "resolution must be at least 64");
  const int n0 = min_index_tec2(p, cfg);
  if (i <= n0 || j <= n0) throw lab_error(errc::InadmissibleIndex, "slab indices must exceed N0");
  if (std::min(i, j) < admissible_min_index(p, cfg)) throw lab_error(errc::InadmissibleIndex, "index below bound");
  IntersectionResult res;
  res.i = i;
  res.j = j;
  res.resolution = opt.resolution;
  res.components = detail::scan_components(i, j, p, model, cfg, opt.resolution, opt.workers);
  if (opt.verify_doubling) {
    const auto finer = detail::scan_components(i, j, p, model, cfg, 2 * opt.resolution, opt.workers);
    res.doubled_count = static_cast<int>(finer.size());
    if (*res.doubled_count != res.count())
      throw lab_error(errc::ResolutionTooCoarse, "component count changed from " + std::to_string(res.count()) +
                                                     " to " + std::to_string(*res.doubled_count));
  }
  return res;
}

// ---------------------------------------------------------------- widths

enum class SlabDirection { Horizontal, Vertical };

struct SlabSample {
  double u = 0;  // horizontal coordinate
  double v = 0;  // vertical coordinate
};

// Sup over base points of the spread between the bounding slice graphs.
inline double slab_width(const std::vector<SlabSample>& samples, SlabDirection dir) {
  if (samples.empty()) throw lab_error(errc::InsufficientSamples, "empty slab sample set");
  std::map<double, std::pair<double, double>> slices;
  for (const auto& s : samples) {
    const double base = dir == SlabDirection::Horizontal ? s.u : s.v;
    const double val = dir == SlabDirection::Horizontal ? s.v : s.u;
    auto it = slices.find(base);
    if (it == slices.end()) slices.emplace(base, std::make_pair(val, val));
    else {
      it->second.first = std::min(it->second.first, val);
      it->second.second = std::max(it->second.second, val);
    }
  }
  double w = 0.0;
  for (const auto& [base, mm] : slices) w = std::max(w, mm.second - mm.first);
  return w;
}

// Samples of S_N: base points over (spiral coordinate, Z), values at the bounding tori radii.
inline std::vector<SlabSample> slab_boundary_samples(int N, const BifocusParams& p, const SlabConfig& cfg, int n_base) {
  const SlabIndex s = slab_radii(N, p, cfg);
  std::vector<SlabSample> out;
  for (int k = 0; k < n_base; ++k) {
    const double u = -cfg.eps_out + 2.0 * cfg.eps_out * k / std::max(1, n_base - 1);
    out.push_back({u, s.b_N1});
    out.push_back({u, s.b_N});
  }
  return out;
}

// ---------------------------------------------------------------- periodic orbits

struct PeriodicOptions {
  int restarts = 8;
  int max_iter = 80;
  double residual_tol = 1e-10;
};

struct PeriodicOrbit {
  Itinerary word;
  std::vector<Vec3<wide>> points_wide;
  std::vector<RectPoint> points;
  double residual = 0;
  int iterations = 0;
  int restart_used = 0;
  Mat3<wide> monodromy;
  std::array<Eigenvalue<wide>, 3> spectrum;  // of the monodromy, by modulus ascending
};

template <class T>
Mat3<T> orbit_monodromy(const std::vector<Vec3<T>>& pts, const BifocusParams& p, const GlobalMapModel& model) {
  Mat3<T> m = Mat3<T>::identity();
  for (const auto& x : pts) m = return_map_jacobian_analytic(x, p, model) * m;
  return m;
}

namespace detail {

// Points on the rays theta = +-pi/2 whose angular image lands on the next point's Y coordinate.
inline std::vector<Vec3<wide>> periodic_seed(const Itinerary& word, const BifocusParams& p, const GlobalMapModel& model,
                                             const SlabConfig& cfg, int restart) {
  const auto k = detail::rate_coefficients(p, model.omega);
  static const double dtheta[8] = {0.0, 0.15, -0.15, 0.4, -0.4, 0.8, -0.8, 1.2};
  const std::size_t n = word.word.size();
  std::vector<wide> y(n, wide(0)), lr(n);
  std::vector<double> theta(n);
  const wide off = wide(model.offset().y);
  const wide period = two_pi<wide>() / wide(k.angle);
  for (int pass = 0; pass < 3; ++pass)
    for (std::size_t m = n; m-- > 0;) {
      const Symbol& sym = word.word[m];
      const double lo = log_b_radius(sym.N + 1, p, cfg), hi = log_b_radius(sym.N, p, cfg);
      const wide centre = wide(0.5 * (lo + hi));
      theta[m] = (sym.k == 1 ? 0.5 : -0.5) * pi();
      const wide y_next = y[(m + 1) % n] * wide(1.0 + dtheta[(restart + static_cast<int>(m)) % 8] * (restart > 0));
      wide l = (wide(theta[m]) - (y_next - off)) / wide(k.angle);
      l += period * round((centre - l) / period);
      lr[m] = l;
      y[m] = (sym.k == 1 ? 1 : -1) * exp(l);
    }
  std::vector<Vec3<wide>> x(n);
  for (std::size_t m = 0; m < n; ++m) {
    const wide r = exp(lr[m]);
    const wide th = wide(theta[m]);
    x[m] = {r * cos(th), r * sin(th), wide(0)};
  }
  return x;
}

inline wide scaled_residual(const std::vector<Vec3<wide>>& x, const BifocusParams& p, const GlobalMapModel& model,
                            const std::vector<double>& scale) {
  const std::size_t n = x.size();
  wide worst = 0;
  for (std::size_t m = 0; m < n; ++m) {
    const Vec3<wide> f = residual_vector(return_map(x[m], p, model), x[(m + 1) % n]);
    const wide v = max_abs(f) / wide(scale[(m + 1) % n]);
    if (v > worst) worst = v;
  }
  return worst;
}

inline bool newton_periodic(std::vector<Vec3<wide>>& x, const BifocusParams& p, const GlobalMapModel& model,
                            const std::vector<double>& scale, int max_iter, int& iterations, wide& final_res) {
  const std::size_t n = x.size();
  const int dim = static_cast<int>(3 * n);
  wide res;
  try {
    res = scaled_residual(x, p, model, scale);
  } catch (const lab_error&) {
    return false;
  }
  const wide target = pow(wide(10), -120);
  const int full_steps = 12;
  std::vector<Vec3<wide>> best = x;
  wide best_res = res;
  for (int it = 0; it < max_iter; ++it) {
    iterations = it + 1;
    if (res < target) break;
    std::vector<wide> a(static_cast<std::size_t>(dim) * dim, wide(0)), b(dim);
    try {
      for (std::size_t m = 0; m < n; ++m) {
        const Mat3<wide> j = return_map_jacobian_analytic(x[m], p, model);
        const Vec3<wide> f = residual_vector(return_map(x[m], p, model), x[(m + 1) % n]);
        const std::size_t nx = (m + 1) % n;
        for (int r = 0; r < 3; ++r) {
          const std::size_t row = 3 * m + r;
          b[row] = f[r];
          for (int c = 0; c < 3; ++c) a[row * dim + 3 * m + c] += j[r][c];
          a[row * dim + 3 * nx + r] -= wide(1);
        }
      }
    } catch (const lab_error&) {
      return false;
    }
    std::vector<wide> step;
    if (!solve_dense(a, b, dim, step)) break;
    auto trial_at = [&](const wide& f) {
      std::vector<Vec3<wide>> t = x;
      for (std::size_t m = 0; m < n; ++m)
        for (int r = 0; r < 3; ++r) t[m][r] -= f * step[3 * m + r];
      return t;
    };
    // undamped steps first: the residual may grow briefly before quadratic convergence sets in
    if (it < full_steps) {
      try {
        std::vector<Vec3<wide>> t = trial_at(wide(1));
        const wide tr = scaled_residual(t, p, model, scale);
        if (isfinite(tr)) {
          x = std::move(t);
          res = tr;
          if (res < best_res) { best_res = res; best = x; }
          continue;
        }
      } catch (const lab_error&) {
      }
      x = best;
      res = best_res;
      it = full_steps - 1;
      continue;
    }
    wide scale_f = 1;
    bool accepted = false;
    for (int h = 0; h < 40; ++h) {
      try {
        std::vector<Vec3<wide>> t = trial_at(scale_f);
        const wide tr = scaled_residual(t, p, model, scale);
        if (isfinite(tr) && tr < res) {
          accepted = tr < wide(0.999) * res;
          x = std::move(t);
          res = tr;
          break;
        }
      } catch (const lab_error&) {
      }
      scale_f /= 2;
    }
    if (res < best_res) { best_res = res; best = x; }
    if (!accepted) break;
  }
  x = best;
  res = best_res;
  final_res = res;
  return true;
}

}  // namespace detail

inline void check_word_admissible(const Itinerary& word, const BifocusParams& p, const SlabConfig& cfg) {
  if (word.word.empty()) throw lab_error(errc::InadmissibleIndex, "empty itinerary");
  const int n0 = min_index_tec2(p, cfg);
  const int bound = admissible_min_index(p, cfg);
  for (const auto& s : word.word) {
    if (s.N <= n0) throw lab_error(errc::InadmissibleIndex, "slab index " + std::to_string(s.N) + " <= N0");
    if (s.N < bound) throw lab_error(errc::InadmissibleIndex, "slab index below admissibility bound");
    if (s.k != 1 && s.k != 2) throw lab_error(errc::InadmissibleIndex, "branch must be 1 or 2");
  }
}

inline PeriodicOrbit finish_orbit(const Itinerary& word, std::vector<Vec3<wide>> x, double residual, int iterations,
                                  int restart, const BifocusParams& p, const GlobalMapModel& model) {
  PeriodicOrbit o;
  o.word = word;
  o.points_wide = std::move(x);
  for (const auto& v : o.points_wide) o.points.push_back({to_double(v.x), to_double(v.y), to_double(v.z)});
  o.residual = residual;
  o.iterations = iterations;
  o.restart_used = restart;
  o.monodromy = orbit_monodromy(o.points_wide, p, model);
  o.spectrum = eigenvalues(o.monodromy);
  return o;
}

// Multiple-shooting Newton in extended precision; the residual is measured relative to the slab radius.
inline PeriodicOrbit find_periodic_orbit(const Itinerary& word, const BifocusParams& p, const GlobalMapModel& model,
                                         const SlabConfig& cfg, const PeriodicOptions& opt = {},
                                         const std::vector<Vec3<wide>>* warm_start = nullptr) {
  validate_params(p);
  check_word_admissible(word, p, cfg);
  const std::size_t n = word.word.size();
  std::vector<double> scale(n);
  for (std::size_t m = 0; m < n; ++m) scale[m] = std::exp(log_b_radius(word.word[m].N, p, cfg));
  bool any_converged = false;
  const int attempts = opt.restarts + (warm_start ? 1 : 0);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    std::vector<Vec3<wide>> x(n);
    const bool warm = warm_start && attempt == 0;
    const int restart = warm_start ? attempt - 1 : attempt;
    if (warm) x = *warm_start;
    else x = detail::periodic_seed(word, p, model, cfg, restart);
    int iters = 0;
    wide res;
    if (!detail::newton_periodic(x, p, model, scale, opt.max_iter, iters, res)) continue;
    if (!(res < wide(opt.residual_tol))) continue;
    any_converged = true;
    bool ok = true;
    for (std::size_t m = 0; m < n; ++m) ok = ok && matches_symbol(x[m], word.word[m], p, cfg);
    if (!ok) continue;
    return finish_orbit(word, std::move(x), to_double(res), iters, restart, p, model);
  }
  if (any_converged) throw lab_error(errc::WrongItinerary, "converged orbit codes differently from " + itinerary_string(word));
  throw lab_error(errc::NoConvergence, "Newton failed for word " + itinerary_string(word));
}

// Per-step log moduli of the monodromy spectrum, descending.
inline std::array<double, 3> orbit_log_moduli(const PeriodicOrbit& o) {
  std::array<double, 3> out;
  const wide p = wide(static_cast<double>(o.points_wide.size()));
  for (int i = 0; i < 3; ++i) out[i] = to_double(log(o.spectrum[i].modulus()) / p);
  std::sort(out.begin(), out.end(), std::greater<double>());
  return out;
}

// Cyclic QR along a periodic orbit, accumulated in extended precision after a transient.
inline LyapunovResult lyapunov_periodic(const PeriodicOrbit& o, const BifocusParams& p, const GlobalMapModel& model,
                                        int cycles = 8, int discard_cycles = 4) {
  const std::size_t n = o.points_wide.size();
  std::vector<Mat3<wide>> jac(n);
  for (std::size_t m = 0; m < n; ++m) jac[m] = return_map_jacobian_analytic(o.points_wide[m], p, model);
  Mat3<wide> q = Mat3<wide>::identity();
  std::array<wide, 3> acc{wide(0), wide(0), wide(0)};
  wide acc_det = 0;
  for (int c = 0; c < discard_cycles + cycles; ++c)
    for (std::size_t m = 0; m < n; ++m) {
      Mat3<wide> nq;
      Vec3<wide> rd;
      qr3(jac[m] * q, nq, rd);
      q = nq;
      if (c >= discard_cycles) {
        for (int i = 0; i < 3; ++i) acc[i] += log(rd[i]);
        acc_det += log(abs(det(jac[m])));
      }
    }
  LyapunovResult r;
  r.steps = static_cast<long>(n) * cycles;
  const wide steps = wide(static_cast<double>(r.steps));
  for (int i = 0; i < 3; ++i) r.exponents[i] = to_double(acc[i] / steps);
  r.mean_log_det = to_double(acc_det / steps);
  std::sort(r.exponents.begin(), r.exponents.end(), std::greater<double>());
  return r;
}

struct LyapunovDomain {
  double r_max = 1.0;
  double r_floor = 1e-12;
};

inline LyapunovResult lyapunov_spectrum(const RectPoint& x0, const BifocusParams& p, const GlobalMapModel& model,
                                        long n_steps = 100000, long n_discard = 1000, const LyapunovDomain& dom = {}) {
  auto inside = [&](const RectPoint& x) {
    const double r = std::hypot(x.x, x.y);
    return std::isfinite(r) && std::isfinite(x.z) && r > dom.r_floor && r <= dom.r_max;
  };
  if (!inside(x0)) throw lab_error(errc::OrbitEscaped, "initial point outside the domain");
  return lyapunov_qr<double>(
      x0, n_steps, n_discard, [&](const RectPoint& x) { return return_map(x, p, model); },
      [&](const RectPoint& x) { return return_map_jacobian_analytic(x, p, model); }, inside);
}

// ---------------------------------------------------------------- hyperbolicity

struct HyperbolicityConfig {
  double small = 0.1;
  double large = 10.0;
  double middle_max = 1.0;
};

struct EigenRecord {
  RectPoint point;
  std::array<double, 3> re{}, im{};  // by modulus ascending
  std::array<double, 3> modulus{};
  bool real = true;
  bool pattern_ok = false;
};

struct HyperbolicityReport {
  std::size_t sample_count = 0;
  std::vector<EigenRecord> eigenvalue_records;
  std::vector<std::size_t> complex_samples;
  std::optional<double> nu_h, nu_v;
  bool cones_ok = true;
  HyperbolicityConfig thresholds;
};

template <class T>
EigenRecord eigen_record(const Vec3<T>& x, const BifocusParams& p, const GlobalMapModel& model,
                         const HyperbolicityConfig& cfg) {
  const auto ev = eigenvalues(return_map_jacobian_analytic(x, p, model));
  EigenRecord rec;
  rec.point = {to_double(x.x), to_double(x.y), to_double(x.z)};
  for (int i = 0; i < 3; ++i) {
    rec.re[i] = to_double(ev[i].re);
    rec.im[i] = to_double(ev[i].im);
    rec.modulus[i] = to_double(ev[i].modulus());
    if (ev[i].im != 0) rec.real = false;
  }
  rec.pattern_ok = rec.real && rec.modulus[0] < cfg.small && rec.modulus[1] <= cfg.middle_max && rec.modulus[2] > cfg.large;
  return rec;
}

template <class T>
HyperbolicityReport hyperbolicity_check(const std::vector<Vec3<T>>& samples, const BifocusParams& p,
                                        const GlobalMapModel& model, const HyperbolicityConfig& cfg = {}) {
  HyperbolicityReport rep;
  rep.thresholds = cfg;
  rep.sample_count = samples.size();
  double nu_h = 0, nu_v = 0;
  bool any = false;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& x = samples[k];
    if (x.x == 0 && x.y == 0) throw lab_error(errc::OnStableManifold, "sample on W^s_loc");
    EigenRecord rec = eigen_record(Vec3<wide>{wide(x.x), wide(x.y), wide(x.z)}, p, model, cfg);
    if (!rec.real) rep.complex_samples.push_back(k);
    else if (!rec.pattern_ok) rep.cones_ok = false;
    if (rec.pattern_ok) {
      any = true;
      nu_h = std::max(nu_h, 1.0 / rec.modulus[2]);
      nu_v = std::max(nu_v, rec.modulus[1]);
    }
    rep.eigenvalue_records.push_back(rec);
  }
  if (any && nu_h > 0 && nu_h < 1) rep.nu_h = nu_h;
  if (any && nu_v > 0 && nu_v < 1) rep.nu_v = nu_v;
  return rep;
}

// ---------------------------------------------------------------- contraction rates

struct ContractionResult {
  double nu_h = 0, nu_v = 0;
  std::vector<double> widths_h, widths_v;  // depth 1..depth
  PeriodicOrbit anchor;
};

struct ContractionOptions {
  int bisection_steps = 400;
  double relative_precision = 1e-12;
  int workers = 1;
};

namespace detail {

inline double fit_rate(const std::vector<double>& widths) {
  const std::size_t n = widths.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = static_cast<double>(k + 1), y = std::log(widths[k]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return std::exp(slope);
}

// Largest t in (0, hi) along the ray base + sign * t * dir that keeps membership; inside(0) holds.
template <class Member>
wide boundary_along(const Vec3<wide>& base, const Vec3<wide>& dir, int sign, wide hi, Member&& member,
                    const ContractionOptions& opt) {
  wide lo = 0;
  for (int it = 0; it < opt.bisection_steps; ++it) {
    const wide mid = (lo + hi) / 2;
    const Vec3<wide> x = base + wide(sign) * mid * dir;
    bool in = false;
    try {
      in = member(x);
    } catch (const lab_error&) {
      in = false;
    }
    if (in) lo = mid; else hi = mid;
    if (lo > 0 && hi - lo <= wide(opt.relative_precision) * lo) break;
  }
  return lo;
}

}  // namespace detail

inline ContractionResult contraction_rates(int i, int j, const BifocusParams& p, const GlobalMapModel& model,
                                           const SlabConfig& cfg, int depth, const ContractionOptions& opt = {}) {
  if (depth < 2) throw lab_error(errc::InsufficientDepth, "depth must be at least 2");
  validate_params(p);
  IntersectionOptions io;
  io.resolution = 64;
  io.verify_doubling = false;
  io.workers = opt.workers;
  const IntersectionResult inter = intersection_components(i, j, p, model, cfg, io);
  if (inter.empty()) throw lab_error(errc::EmptyIntersection, "R0(S_i) and S_j do not intersect");

  Itinerary word;
  word.word = i == j ? std::vector<Symbol>{{i, 1}} : std::vector<Symbol>{{i, 1}, {j, 1}};
  PeriodicOrbit orbit;
  try {
    orbit = find_periodic_orbit(word, p, model, cfg);
  } catch (const lab_error& e) {
    throw lab_error(errc::EmptyIntersection, std::string("no anchor orbit: ") + e.what());
  }
  const std::size_t period = orbit.points_wide.size();
  const Vec3<wide> P = orbit.points_wide[0];
  const Mat3<wide>& M = orbit.monodromy;
  const Vec3<wide> e_u = eigenvector(M, orbit.spectrum[2].re);
  const Vec3<wide> e_ws = eigenvector(M, orbit.spectrum[1].re);

  auto forward_member = [&](int d) {
    return [&, d](const Vec3<wide>& x0) {
      Vec3<wide> x = x0;
      for (int m = 0; m <= d; ++m) {
        if (!matches_symbol(x, word.word[m % period], p, cfg)) return false;
        if (m < d) x = return_map(x, p, model);
      }
      return true;
    };
  };
  auto backward_member = [&](int d) {
    return [&, d](const Vec3<wide>& x0) {
      Vec3<wide> x = x0;
      for (int m = 0; m <= d; ++m) {
        const std::size_t idx = (period - (static_cast<std::size_t>(m) % period)) % period;
        if (!matches_symbol(x, word.word[idx], p, cfg)) return false;
        if (m < d) x = return_map_inverse_exact(x, p, model);
      }
      return true;
    };
  };

  const wide r0 = sqrt(P.x * P.x + P.y * P.y);
  ContractionResult out;
  auto measure = [&](const Vec3<wide>& dir, bool forward, std::vector<double>& widths) {
    wide hi_pos = r0, hi_neg = r0;
    for (int d = 0; d <= depth; ++d) {
      const wide tp = forward ? detail::boundary_along(P, dir, 1, hi_pos, forward_member(d), opt)
                              : detail::boundary_along(P, dir, 1, hi_pos, backward_member(d), opt);
      const wide tn = forward ? detail::boundary_along(P, dir, -1, hi_neg, forward_member(d), opt)
                              : detail::boundary_along(P, dir, -1, hi_neg, backward_member(d), opt);
      if (d > 0) widths.push_back(to_double((tp + tn) / r0));
      hi_pos = tp * wide(1.0 + 1e-9);
      hi_neg = tn * wide(1.0 + 1e-9);
    }
  };
  measure(e_u, true, out.widths_h);
  measure(e_ws, false, out.widths_v);
  for (double w : out.widths_h)
    if (!(w > 0)) throw lab_error(errc::NoDecay, "vanishing horizontal width");
  for (double w : out.widths_v)
    if (!(w > 0)) throw lab_error(errc::NoDecay, "vanishing vertical width");
  out.nu_h = detail::fit_rate(out.widths_h);
  out.nu_v = detail::fit_rate(out.widths_v);
  out.anchor = std::move(orbit);
  if (!(out.nu_h < 1.0)) throw lab_error(errc::NoDecay, "horizontal widths do not decay");
  if (!(out.nu_v < 1.0)) throw lab_error(errc::NoDecay, "vertical widths do not decay");
  return out;
}

}  // namespace bifocus
