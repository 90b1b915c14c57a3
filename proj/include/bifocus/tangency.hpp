#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "core.hpp"
#include "horseshoe.hpp"
#include "linalg.hpp"
#include "lyapunov.hpp"
#include "parallel.hpp"
#include "precision.hpp"
#include "return_map.hpp"

namespace bifocus {

// ---------------------------------------------------------------- Hénon limit family

struct HenonParams {
  double a_tilde = -1.4;
  double b_tilde = 0.3;
};

inline Vec3<double> henon_limit_map(const Vec3<double>& p, const HenonParams& hp) {
  return {p.z, hp.b_tilde * p.z, hp.a_tilde + p.y + p.z * p.z};
}

inline Mat3<double> henon_limit_jacobian(const Vec3<double>& p, const HenonParams& hp) {
  Mat3<double> j;
  j[0][2] = 1.0;
  j[1][2] = hp.b_tilde;
  j[2][1] = 1.0;
  j[2][2] = 2.0 * p.z;
  return j;
}

// (y, z) -> (b z, a + y + z^2)
inline double henon_reduced_jacobian_det(const HenonParams& hp, double z) {
  const double j00 = 0.0, j01 = hp.b_tilde, j10 = 1.0, j11 = 2.0 * z;
  return j00 * j11 - j01 * j10;
}

// Real fixed points from z^2 + (b - 1) z + a = 0, ascending in z.
inline std::vector<Vec3<double>> henon_fixed_points(const HenonParams& hp) {
  const double bb = hp.b_tilde - 1.0, c = hp.a_tilde;
  const double disc = bb * bb - 4.0 * c;
  std::vector<Vec3<double>> out;
  if (disc < 0.0) return out;
  const double sq = std::sqrt(disc);
  const double q = -0.5 * (bb + std::copysign(sq, bb));
  std::vector<double> zs;
  if (q != 0.0) {
    zs.push_back(q);
    zs.push_back(c / q);
  } else {
    zs.push_back(0.0);
    zs.push_back(0.0);
  }
  std::sort(zs.begin(), zs.end());
  if (disc == 0.0) zs.resize(1);
  for (double z : zs) out.push_back({z, hp.b_tilde * z, z});
  return out;
}

// ---------------------------------------------------------------- rotated saddle

struct RotatedSaddleParams {
  double mu_star = 1.1;
  double omega_star = 0.6180339887498949;
  double mu3_inv = 0.5;
};

inline void validate_rotated_saddle(const RotatedSaddleParams& rp) {
  if (!(rp.mu_star > 1.0)) throw lab_error(errc::ParamViolation, "mu_star > 1");
  if (!(std::fabs(rp.mu3_inv) < 1.0)) throw lab_error(errc::ParamViolation, "|mu3_inv| < 1");
}

inline Mat3<double> rotated_saddle_matrix(const RotatedSaddleParams& rp) {
  const double c = rp.mu_star * std::cos(two_pi() * rp.omega_star);
  const double s = rp.mu_star * std::sin(two_pi() * rp.omega_star);
  Mat3<double> m;
  m[0][0] = c;
  m[0][1] = -s;
  m[1][0] = s;
  m[1][1] = c;
  m[2][2] = rp.mu3_inv;
  return m;
}

inline Vec3<double> rotated_saddle_step(const Vec3<double>& p, const RotatedSaddleParams& rp) {
  return rotated_saddle_matrix(rp) * p;
}

// ---------------------------------------------------------------- Neimark-Sacker normal form

struct NormalFormParams {
  double mu = 0.04;
  double a_mu = 1.0;
  double beta_mu = 0.5;
  double gamma = 0.5;
  bool hot_enabled = false;
  double c2 = 0.1;  // angular r^2 coefficient
  double c4 = 0.1;  // radial r^4 coefficient
};

inline void validate_normal_form(const NormalFormParams& nf) {
  if (!(nf.a_mu > 0.0)) throw lab_error(errc::ParamViolation, "a_mu > 0");
  if (!(std::fabs(nf.gamma) > 0.0 && std::fabs(nf.gamma) < 1.0)) throw lab_error(errc::ParamViolation, "0 < |gamma| < 1");
  if (!std::isfinite(nf.mu) || !std::isfinite(nf.beta_mu)) throw lab_error(errc::ParamViolation, "finite parameters");
}

struct CylPoint {
  double r = 0, theta = 0, t = 0;
};

struct NormalFormStep {
  CylPoint point;
  bool clamped = false;
};

inline NormalFormStep normal_form_map(const CylPoint& p, const NormalFormParams& nf, bool strict = false) {
  if (p.r < 0.0) throw lab_error(errc::NegativeRadius, "r >= 0 required");
  double r = (1.0 + nf.mu) * p.r - nf.a_mu * p.r * p.r * p.r;
  double th = p.theta + nf.beta_mu;
  if (nf.hot_enabled) {
    r += nf.c4 * p.r * p.r * p.r * p.r;
    th += nf.c2 * p.r * p.r;
  }
  NormalFormStep out;
  if (r < 0.0) {
    if (strict) throw lab_error(errc::NegativeRadius, "cubic term drove the radius negative");
    r = 0.0;
    out.clamped = true;
  }
  out.point = {r, wrap_2pi(th), nf.gamma * p.t};
  return out;
}

inline Vec3<double> normal_form_embed(const CylPoint& p) {
  return {p.r * std::cos(p.theta), p.r * std::sin(p.theta), p.t};
}

inline CylPoint normal_form_unembed(const Vec3<double>& x) {
  return {std::hypot(x.x, x.y), wrap_2pi(std::atan2(x.y, x.x)), x.z};
}

inline Vec3<double> normal_form_cartesian(const Vec3<double>& x, const NormalFormParams& nf) {
  return normal_form_embed(normal_form_map(normal_form_unembed(x), nf).point);
}

inline Mat3<double> normal_form_cartesian_jacobian(const Vec3<double>& x, const NormalFormParams& nf) {
  const double r = std::hypot(x.x, x.y);
  const double c4 = nf.hot_enabled ? nf.c4 : 0.0, c2 = nf.hot_enabled ? nf.c2 : 0.0;
  const double h = (1.0 + nf.mu) - nf.a_mu * r * r + c4 * r * r * r;
  const double dh = -2.0 * nf.a_mu * r + 3.0 * c4 * r * r;
  const double phi = nf.beta_mu + c2 * r * r;
  const double dphi = 2.0 * c2 * r;
  const double c = std::cos(phi), s = std::sin(phi);
  // inner = h I + (h'/r) u u^T + h (phi'/r) J u u^T
  double in[2][2] = {{h, 0.0}, {0.0, h}};
  if (r > 0.0) {
    const double u[2] = {x.x, x.y};
    const double ju[2] = {-x.y, x.x};
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k) in[i][k] += (dh / r) * u[i] * u[k] + h * (dphi / r) * ju[i] * u[k];
  }
  Mat3<double> j;
  j[0][0] = c * in[0][0] - s * in[1][0];
  j[0][1] = c * in[0][1] - s * in[1][1];
  j[1][0] = s * in[0][0] + c * in[1][0];
  j[1][1] = s * in[0][1] + c * in[1][1];
  j[2][2] = nf.gamma;
  return j;
}

// ---------------------------------------------------------------- classification

enum class AttractorKind { Sink, InvariantCircle, StrangeAttractor, Escaped, Undecided };

inline const char* attractor_kind_name(AttractorKind k) {
  switch (k) {
    case AttractorKind::Sink: return "Sink";
    case AttractorKind::InvariantCircle: return "InvariantCircle";
    case AttractorKind::StrangeAttractor: return "StrangeAttractor";
    case AttractorKind::Escaped: return "Escaped";
    case AttractorKind::Undecided: return "Undecided";
  }
  return "Undecided";
}

struct AttractorEvidence {
  double max_norm = 0;
  double circle_radius = std::numeric_limits<double>::quiet_NaN();
  double circle_residual = std::numeric_limits<double>::quiet_NaN();
  double recurrence_rate = 0;
  long escaped_at = -1;
};

struct AttractorClass {
  AttractorKind kind = AttractorKind::Undecided;
  std::array<double, 3> lyapunov{};
  AttractorEvidence evidence;
};

struct ClassifyConfig {
  double zero_band = 1e-3;
  double sink_threshold = -1e-3;
  double strange_threshold = 1e-2;
  double circle_tol = 1e-4;
  double divergence_bound = 1e6;
  double discard_fraction = 0.1;
  long min_steps = 10000;
};

using FamilyParams = std::variant<HenonParams, RotatedSaddleParams, NormalFormParams>;

struct CircleFit {
  double radius = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
};

// Best-fit plane by PCA, then an algebraic circle fit inside it; residual combines in-plane and normal RMS.
inline CircleFit fit_circle(const std::vector<Vec3<double>>& pts) {
  CircleFit fit;
  const std::size_t n = pts.size();
  if (n < 3) return fit;
  Vec3<double> c{};
  for (const auto& p : pts) c += p;
  c = (1.0 / static_cast<double>(n)) * c;
  Mat3<double> cov;
  for (const auto& p : pts) {
    const Vec3<double> d = p - c;
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) cov[i][k] += d[i] * d[k] / static_cast<double>(n);
  }
  const auto ev = eigenvalues(cov);
  if (!(ev[2].re > 0.0)) return fit;
  Vec3<double> normal = eigenvector(cov, ev[0].re);
  Vec3<double> e1 = eigenvector(cov, ev[2].re);
  e1 -= dot(e1, normal) * normal;
  const double n1 = norm(e1);
  if (!(n1 > 0.0)) return fit;
  e1 = (1.0 / n1) * e1;
  const Vec3<double> e2 = cross(normal, e1);
  // x^2 + y^2 + D x + E y + F = 0 in least squares
  std::vector<double> ata(9, 0.0), atb(3, 0.0);
  std::vector<std::array<double, 3>> uv(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3<double> d = pts[k] - c;
    const double u = dot(d, e1), v = dot(d, e2), w = dot(d, normal);
    uv[k] = {u, v, w};
    const double row[3] = {u, v, 1.0};
    const double rhs = -(u * u + v * v);
    for (int i = 0; i < 3; ++i) {
      atb[i] += row[i] * rhs;
      for (int j = 0; j < 3; ++j) ata[i * 3 + j] += row[i] * row[j];
    }
  }
  std::vector<double> sol;
  if (!solve_dense(ata, atb, 3, sol)) return fit;
  const double cu = -sol[0] / 2, cv = -sol[1] / 2;
  const double r2 = cu * cu + cv * cv - sol[2];
  if (!(r2 > 0.0)) return fit;
  fit.radius = std::sqrt(r2);
  double ss = 0.0;
  for (const auto& q : uv) {
    const double dr = std::hypot(q[0] - cu, q[1] - cv) - fit.radius;
    ss += dr * dr + q[2] * q[2];
  }
  fit.residual = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

namespace detail {

inline Vec3<double> family_step(const FamilyParams& fp, const Vec3<double>& x) {
  return std::visit(
      [&](const auto& p) -> Vec3<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, HenonParams>) return henon_limit_map(x, p);
        else if constexpr (std::is_same_v<P, RotatedSaddleParams>) return rotated_saddle_step(x, p);
        else return normal_form_cartesian(x, p);
      },
      fp);
}

inline Mat3<double> family_jacobian(const FamilyParams& fp, const Vec3<double>& x) {
  return std::visit(
      [&](const auto& p) -> Mat3<double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, HenonParams>) return henon_limit_jacobian(x, p);
        else if constexpr (std::is_same_v<P, RotatedSaddleParams>) return rotated_saddle_matrix(p);
        else return normal_form_cartesian_jacobian(x, p);
      },
      fp);
}

}  // namespace detail

// x0 is Cartesian; for the normal form it is the embedding (r cos theta, r sin theta, t).
inline AttractorClass classify_attractor(const FamilyParams& fp, const Vec3<double>& x0, long n_steps,
                                         const ClassifyConfig& cfg = {}) {
  if (n_steps < cfg.min_steps) throw lab_error(errc::InsufficientSamples, "n_steps below minimum");
  if (const auto* nf = std::get_if<NormalFormParams>(&fp)) validate_normal_form(*nf);
  const long discard = static_cast<long>(cfg.discard_fraction * static_cast<double>(n_steps));
  AttractorClass out;
  auto bounded = [&](const Vec3<double>& x) {
    const double nx = norm(x);
    return std::isfinite(nx) && nx <= cfg.divergence_bound;
  };

  // orbit statistics pass
  Vec3<double> x = x0;
  std::vector<Vec3<double>> tail;
  tail.reserve(static_cast<std::size_t>(std::min<long>(n_steps - discard, 20000)));
  const long stride = std::max<long>(1, (n_steps - discard) / 20000);
  for (long k = 0; k < n_steps; ++k) {
    x = detail::family_step(fp, x);
    if (!bounded(x)) {
      out.kind = AttractorKind::Escaped;
      out.evidence.escaped_at = k + 1;
      out.evidence.max_norm = std::numeric_limits<double>::infinity();
      out.lyapunov.fill(std::numeric_limits<double>::quiet_NaN());
      return out;
    }
    if (k >= discard) {
      out.evidence.max_norm = std::max(out.evidence.max_norm, norm(x));
      if ((k - discard) % stride == 0) tail.push_back(x);
    }
  }
  const LyapunovResult ly = lyapunov_qr<double>(
      x0, n_steps - discard, discard, [&](const Vec3<double>& y) { return detail::family_step(fp, y); },
      [&](const Vec3<double>& y) { return detail::family_jacobian(fp, y); }, bounded);
  out.lyapunov = ly.exponents;

  const CircleFit fit = fit_circle(tail);
  out.evidence.circle_radius = fit.radius;
  out.evidence.circle_residual = fit.residual;
  if (!tail.empty()) {
    double diam = 0.0;
    for (const auto& p : tail) diam = std::max(diam, norm(p - tail.front()));
    const double eps = std::max(1e-12, 1e-3 * diam);
    long hits = 0;
    for (std::size_t k = 1; k < tail.size(); ++k)
      if (norm(tail[k] - tail.front()) < eps) ++hits;
    out.evidence.recurrence_rate = static_cast<double>(hits) / static_cast<double>(tail.size());
  }

  const double lmax = out.lyapunov[0];
  if (lmax < cfg.sink_threshold) out.kind = AttractorKind::Sink;
  else if (std::fabs(lmax) < cfg.zero_band && fit.residual < cfg.circle_tol) out.kind = AttractorKind::InvariantCircle;
  else if (lmax > cfg.strange_threshold) out.kind = AttractorKind::StrangeAttractor;
  else out.kind = AttractorKind::Undecided;
  return out;
}

// ---------------------------------------------------------------- tangency scan

class continuation_lost : public lab_error {
 public:
  continuation_lost(const std::string& detail, std::optional<double> last_good)
      : lab_error(errc::ContinuationLost, detail), last_good_delta(last_good) {}
  std::optional<double> last_good_delta;
};

struct TangencyScanConfig {
  double delta_from = 1.5;
  double delta_to = 2.5;
  int grid = 21;
  double bracket_width = 1e-3;
  int resolution = 1000;
  double segment_scale = 1e-3;  // fundamental segment length relative to |P|
  int images = 2;
  int workers = 1;
};

struct TangencyEvent {
  double delta_lo = 0, delta_hi = 0;
  int count_lo = 0, count_hi = 0;
  bool homoclinic = false;
};

struct TangencySample {
  double delta = 0;
  int crossings = 0;
  int unstable_points = 0;
  int stable_points = 0;
};

struct TangencyScanResult {
  std::vector<TangencySample> samples;
  std::vector<TangencyEvent> events;
  bool homoclinic = false;
};

namespace detail {

using Polyline = std::vector<std::array<double, 2>>;

inline bool segments_cross(const std::array<double, 2>& a, const std::array<double, 2>& b,
                           const std::array<double, 2>& c, const std::array<double, 2>& d) {
  auto orient = [](const std::array<double, 2>& p, const std::array<double, 2>& q, const std::array<double, 2>& r) {
    const double v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    return (v > 0) - (v < 0);
  };
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

inline int count_crossings(const std::vector<Polyline>& u, const std::vector<Polyline>& s) {
  struct Seg {
    std::array<double, 2> a, b;
    double x0, x1, y0, y1;
  };
  auto segs = [](const std::vector<Polyline>& lines) {
    std::vector<Seg> out;
    for (const auto& l : lines)
      for (std::size_t k = 0; k + 1 < l.size(); ++k)
        out.push_back({l[k], l[k + 1], std::min(l[k][0], l[k + 1][0]), std::max(l[k][0], l[k + 1][0]),
                       std::min(l[k][1], l[k + 1][1]), std::max(l[k][1], l[k + 1][1])});
    return out;
  };
  const auto su = segs(u), ss = segs(s);
  int count = 0;
  for (const auto& p : su)
    for (const auto& q : ss) {
      if (p.x1 < q.x0 || q.x1 < p.x0 || p.y1 < q.y0 || q.y1 < p.y0) continue;
      if (segments_cross(p.a, p.b, q.a, q.b)) ++count;
    }
  return count;
}

struct ScanContext {
  BifocusParams base;
  GlobalMapModel model;
  SlabConfig slab;
  Itinerary word_n, word_m;
  TangencyScanConfig cfg;
};

struct OrbitPair {
  PeriodicOrbit pn, pm;
};

inline BifocusParams params_at(const ScanContext& ctx, double delta) {
  BifocusParams p = ctx.base;
  p.alpha1 = delta * p.alpha2;
  return p;
}

inline OrbitPair orbits_at(const ScanContext& ctx, double delta, const OrbitPair* warm) {
  const BifocusParams p = params_at(ctx, delta);
  validate_params(p);
  OrbitPair out;
  out.pn = find_periodic_orbit(ctx.word_n, p, ctx.model, ctx.slab, {}, warm ? &warm->pn.points_wide : nullptr);
  out.pm = find_periodic_orbit(ctx.word_m, p, ctx.model, ctx.slab, {}, warm ? &warm->pm.points_wide : nullptr);
  return out;
}

inline bool in_domain(const Vec3<wide_lite>& x) {
  const wide_lite s = x.x * x.x + x.y * x.y;
  return isfinite(s) && isfinite(x.z) && s > 0 && s <= 1;
}

// Images under R^{+-p k}, k = 1..images, of a log-sampled fundamental segment along dir.
inline std::vector<std::vector<Vec3<double>>> grow_curve(const PeriodicOrbit& o, const Vec3<wide>& dir_w, double mult,
                                                         bool forward, const BifocusParams& p,
                                                         const GlobalMapModel& model, const TangencyScanConfig& cfg) {
  const Vec3<wide_lite> P = o.points_wide[0].template cast<wide_lite>();
  const Vec3<wide_lite> dir = dir_w.template cast<wide_lite>();
  const wide_lite scale = wide_lite(cfg.segment_scale) * sqrt(P.x * P.x + P.y * P.y);
  const double span = std::fabs(std::log(std::fabs(mult)));
  const std::size_t period = o.points_wide.size();
  const std::size_t res = static_cast<std::size_t>(cfg.resolution);
  const int images = cfg.images;
  // chains[i][img] is valid for img < alive[i]
  std::vector<std::vector<Vec3<double>>> chains(2 * res);
  parallel_for(2 * res, cfg.workers, [&](std::size_t i) {
    const int sign = i < res ? 1 : -1;
    const double frac = static_cast<double>(i % res) / static_cast<double>(res - 1);
    const wide_lite s = scale * wide_lite(std::exp(-span * (1.0 - frac)));
    Vec3<wide_lite> x = P + wide_lite(sign) * s * dir;
    for (int img = 0; img < images; ++img) {
      for (std::size_t step = 0; step < period; ++step) {
        try {
          x = forward ? return_map(x, p, model) : return_map_inverse_exact(x, p, model);
        } catch (const lab_error&) {
          return;
        }
        if (!in_domain(x)) return;
      }
      chains[i].push_back({to_double(x.x), to_double(x.y), to_double(x.z)});
    }
  });
  std::vector<std::vector<Vec3<double>>> lines;
  for (std::size_t half = 0; half < 2; ++half)
    for (int img = 0; img < images; ++img) {
      std::vector<Vec3<double>> cur;
      for (std::size_t k = 0; k < res; ++k) {
        const auto& ch = chains[half * res + k];
        if (static_cast<int>(ch.size()) > img) cur.push_back(ch[img]);
        else if (!cur.empty()) lines.push_back(std::move(cur)), cur.clear();
      }
      if (!cur.empty()) lines.push_back(std::move(cur));
    }
  return lines;
}

inline TangencySample sample_at(const ScanContext& ctx, double delta, const OrbitPair& orbits) {
  const BifocusParams p = params_at(ctx, delta);
  const PeriodicOrbit& pn = orbits.pn;
  const PeriodicOrbit& pm = orbits.pm;
  const Vec3<wide> e_u = eigenvector(pn.monodromy, pn.spectrum[2].re);
  const Vec3<wide> e_ws = eigenvector(pm.monodromy, pm.spectrum[1].re);
  const Vec3<wide> e_ss_w = eigenvector(pm.monodromy, pm.spectrum[0].re);
  const auto unstable = grow_curve(pn, e_u, to_double(pn.spectrum[2].re), true, p, ctx.model, ctx.cfg);
  const auto stable = grow_curve(pm, e_ws, to_double(pm.spectrum[1].re), false, p, ctx.model, ctx.cfg);
  TangencySample out;
  out.delta = delta;
  for (const auto& l : unstable) out.unstable_points += static_cast<int>(l.size());
  for (const auto& l : stable) out.stable_points += static_cast<int>(l.size());
  if (out.unstable_points == 0 || out.stable_points == 0)
    throw lab_error(errc::ManifoldEscaped, "all curve points left the domain at delta " + std::to_string(delta));
  Vec3<double> e_ss{to_double(e_ss_w.x), to_double(e_ss_w.y), to_double(e_ss_w.z)};
  e_ss = (1.0 / norm(e_ss)) * e_ss;
  Vec3<double> trial = std::fabs(e_ss.x) < 0.9 ? Vec3<double>{1, 0, 0} : Vec3<double>{0, 1, 0};
  Vec3<double> b1 = trial - dot(trial, e_ss) * e_ss;
  b1 = (1.0 / norm(b1)) * b1;
  const Vec3<double> b2 = cross(e_ss, b1);
  auto project = [&](const std::vector<std::vector<Vec3<double>>>& lines) {
    std::vector<Polyline> out2;
    for (const auto& l : lines) {
      Polyline pl;
      for (const auto& q : l) pl.push_back({dot(q, b1), dot(q, b2)});
      out2.push_back(std::move(pl));
    }
    return out2;
  };
  out.crossings = count_crossings(project(unstable), project(stable));
  return out;
}

}  // namespace detail

inline TangencyScanResult tangency_scan(const BifocusParams& base, const GlobalMapModel& model, const SlabConfig& slab,
                                        const Itinerary& pn_word, const Itinerary& pm_word,
                                        const TangencyScanConfig& cfg = {}) {
  if (cfg.grid < 2 || cfg.resolution < 2) throw lab_error(errc::ParamViolation, "grid and resolution must be >= 2");
  detail::ScanContext ctx{base, model, slab, pn_word, pm_word, cfg};
  TangencyScanResult res;
  res.homoclinic = pn_word.word == pm_word.word;

  std::vector<double> deltas(cfg.grid);
  std::vector<detail::OrbitPair> orbits;
  std::optional<double> last_good;
  for (int k = 0; k < cfg.grid; ++k) {
    const double d = cfg.delta_from + (cfg.delta_to - cfg.delta_from) * k / (cfg.grid - 1);
    deltas[k] = d;
    try {
      orbits.push_back(detail::orbits_at(ctx, d, orbits.empty() ? nullptr : &orbits.back()));
    } catch (const lab_error& e) {
      throw continuation_lost("orbit lost at delta " + std::to_string(d) + " (" + e.what() + ")", last_good);
    }
    last_good = d;
    res.samples.push_back(detail::sample_at(ctx, d, orbits.back()));
  }
  for (int k = 0; k + 1 < cfg.grid; ++k) {
    if (res.samples[k].crossings == res.samples[k + 1].crossings) continue;
    double lo = deltas[k], hi = deltas[k + 1];
    int c_lo = res.samples[k].crossings, c_hi = res.samples[k + 1].crossings;
    detail::OrbitPair warm = orbits[k];
    while (std::fabs(hi - lo) > cfg.bracket_width) {
      const double mid = 0.5 * (lo + hi);
      detail::OrbitPair om;
      try {
        om = detail::orbits_at(ctx, mid, &warm);
      } catch (const lab_error& e) {
        throw continuation_lost("orbit lost at delta " + std::to_string(mid) + " (" + e.what() + ")", lo);
      }
      const int c = detail::sample_at(ctx, mid, om).crossings;
      if (c == c_lo) {
        lo = mid;
        warm = std::move(om);
      } else {
        hi = mid;
        c_hi = c;
      }
    }
    res.events.push_back({std::min(lo, hi), std::max(lo, hi), c_lo, c_hi, res.homoclinic});
  }
  return res;
}

}  // namespace bifocus
