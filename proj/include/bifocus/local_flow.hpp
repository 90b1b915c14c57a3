#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <vector>

#include "coords.hpp"
#include "core.hpp"

namespace bifocus {

inline double flight_time(const InSectionPoint& p, const BifocusParams& params) {
  if (p.r_u == 0.0) throw lab_error(errc::OnStableManifold, "r_u = 0");
  return -std::log(p.r_u) / params.alpha2;
}

inline OutSectionPoint local_map(const InSectionPoint& p, const BifocusParams& params) {
  if (p.r_u == 0.0) throw lab_error(errc::OnStableManifold, "r_u = 0");
  if (!(p.r_u > 0.0 && p.r_u <= 1.0)) throw lab_error(errc::OutOfSection, "r_u outside (0,1]");
  const double lr = std::log(p.r_u);
  return {std::pow(p.r_u, params.delta()), wrap_2pi(p.phi_s - params.omega1 / params.alpha2 * lr),
          wrap_2pi(p.phi_u - params.omega2 / params.alpha2 * lr)};
}

inline InSectionPoint local_map_inverse(const OutSectionPoint& q, const BifocusParams& params) {
  if (q.r_s == 0.0) throw lab_error(errc::OnUnstableManifold, "r_s = 0");
  if (!(q.r_s > 0.0 && q.r_s <= 1.0)) throw lab_error(errc::OutOfSection, "r_s outside (0,1]");
  const double lr = std::log(q.r_s);
  return {wrap_2pi(q.phi_s + params.omega1 / params.alpha1 * lr), std::pow(q.r_s, 1.0 / params.delta()),
          wrap_2pi(q.phi_u + params.omega2 / params.alpha1 * lr)};
}

struct FlowState {
  double r_s = 0, phi_s = 0, r_u = 0, phi_u = 0;
};

struct IntegratorConfig {
  double step = 1e-3;
  double event_tol = 1e-12;
};

// largest |h * eigenvalue| on the negative real axis kept bounded by classical RK4
inline constexpr double rk4_stability_bound = 2.785;

namespace detail {

inline FlowState flow_rhs(const FlowState& x, const BifocusParams& p) {
  return {-p.alpha1 * x.r_s, p.omega1, p.alpha2 * x.r_u, p.omega2};
}

inline FlowState axpy(const FlowState& x, double h, const FlowState& k) {
  return {x.r_s + h * k.r_s, x.phi_s + h * k.phi_s, x.r_u + h * k.r_u, x.phi_u + h * k.phi_u};
}

inline FlowState rk4_step(const FlowState& x, const BifocusParams& p, double h) {
  FlowState k1 = flow_rhs(x, p);
  FlowState k2 = flow_rhs(axpy(x, h / 2, k1), p);
  FlowState k3 = flow_rhs(axpy(x, h / 2, k2), p);
  FlowState k4 = flow_rhs(axpy(x, h, k3), p);
  return {x.r_s + h / 6 * (k1.r_s + 2 * k2.r_s + 2 * k3.r_s + k4.r_s),
          x.phi_s + h / 6 * (k1.phi_s + 2 * k2.phi_s + 2 * k3.phi_s + k4.phi_s),
          x.r_u + h / 6 * (k1.r_u + 2 * k2.r_u + 2 * k3.r_u + k4.r_u),
          x.phi_u + h / 6 * (k1.phi_u + 2 * k2.phi_u + 2 * k3.phi_u + k4.phi_u)};
}

inline void check_step(const BifocusParams& p, const IntegratorConfig& cfg) {
  if (!(cfg.step > 0.0)) throw lab_error(errc::StepTooLarge, "step must be positive");
  const double rate = std::max(std::fabs(p.alpha1), std::fabs(p.alpha2));
  if (rate * cfg.step > rk4_stability_bound)
    throw lab_error(errc::StepTooLarge, "max(alpha1, alpha2) * step exceeds the RK4 stability bound");
}

}  // namespace detail

inline FlowState integrate_linear_flow(const FlowState& x0, const BifocusParams& params, double t,
                                       const IntegratorConfig& cfg = {}) {
  detail::check_step(params, cfg);
  if (!std::isfinite(t)) throw lab_error(errc::StepTooLarge, "non-finite time");
  if (t == 0.0) return x0;
  const long n = std::max(1L, static_cast<long>(std::ceil(std::fabs(t) / cfg.step)));
  const double h = t / static_cast<double>(n);
  FlowState x = x0;
  for (long i = 0; i < n; ++i) x = detail::rk4_step(x, params, h);
  return x;
}

struct ExitResult {
  OutSectionPoint point;
  double time = 0;
  FlowState state;
};

// Integrates from Sigma_in (r_s = 1) until r_u(t) = 1, locating the crossing by bisection in time.
inline ExitResult flow_to_exit(const InSectionPoint& p, const BifocusParams& params,
                               const IntegratorConfig& cfg = {}) {
  detail::check_step(params, cfg);
  if (p.r_u == 0.0) throw lab_error(errc::OnStableManifold, "r_u = 0");
  FlowState x{1.0, p.phi_s, p.r_u, p.phi_u};
  double t = 0.0;
  if (x.r_u < 1.0) {
    for (;;) {
      FlowState nx = detail::rk4_step(x, params, cfg.step);
      if (nx.r_u >= 1.0) break;
      x = nx;
      t += cfg.step;
    }
    double lo = 0.0, hi = cfg.step;
    while (hi - lo > cfg.event_tol) {
      const double mid = 0.5 * (lo + hi);
      if (mid == lo || mid == hi) break;
      if (detail::rk4_step(x, params, mid).r_u < 1.0) lo = mid; else hi = mid;
    }
    const double tau = 0.5 * (lo + hi);
    x = detail::rk4_step(x, params, tau);
    t += tau;
  }
  return {{x.r_s, wrap_2pi(x.phi_s), wrap_2pi(x.phi_u)}, t, x};
}

enum class CurveKind { Helix, Spiral, Neither };

inline const char* curve_kind_name(CurveKind k) {
  switch (k) {
    case CurveKind::Helix: return "Helix";
    case CurveKind::Spiral: return "Spiral";
    case CurveKind::Neither: return "Neither";
  }
  return "?";
}

struct ClassifierConfig {
  double sweep_threshold = 2.0 * two_pi();
  double radial_threshold = 1e-3;
  double monotone_tol = 1e-9;
};

struct TraceRow {
  double t = 0;
  double phi_s_out_unwrapped = 0;
  double r_s_out = 0;
  double phi_u_out_unwrapped = 0;
};

struct CurveClassification {
  CurveKind kind = CurveKind::Neither;
  double sweep_s = 0;
  double sweep_u = 0;
  double radial_ratio = 1;
  bool monotone = false;
  std::vector<TraceRow> trace;
};

inline void write_trace_csv(std::ostream& os, const CurveClassification& c) {
  os << "t,phi_s_out_unwrapped,r_s_out,phi_u_out_unwrapped\n";
  os.precision(17);
  for (const auto& r : c.trace)
    os << r.t << ',' << r.phi_s_out_unwrapped << ',' << r.r_s_out << ',' << r.phi_u_out_unwrapped << '\n';
}

struct SegmentSpec {
  std::function<InSectionPoint(double)> sampler;
  int samples = 1000;
  double t_min = 1e-6;
};

namespace detail {

inline double unwrap_next(double prev_unwrapped, double wrapped) {
  return prev_unwrapped + wrap_pi(wrapped - prev_unwrapped);
}

inline bool non_increasing(const std::vector<TraceRow>& tr, double tol) {
  for (std::size_t k = 1; k < tr.size(); ++k)
    if (tr[k].r_s_out > tr[k - 1].r_s_out * (1.0 + tol) + 1e-300) return false;
  return true;
}

inline void finish_classification(CurveClassification& c, CurveKind positive, double sweep,
                                  const ClassifierConfig& cfg) {
  const auto& tr = c.trace;
  c.radial_ratio = tr.front().r_s_out > 0 ? tr.back().r_s_out / tr.front().r_s_out : 1.0;
  c.monotone = non_increasing(tr, cfg.monotone_tol);
  const bool ok = sweep >= cfg.sweep_threshold && c.radial_ratio < cfg.radial_threshold && c.monotone;
  c.kind = ok ? positive : CurveKind::Neither;
}

}  // namespace detail

inline CurveClassification classify_segment_image(const SegmentSpec& s, const BifocusParams& params,
                                                  const ClassifierConfig& cfg = {}) {
  if (s.samples < 16) throw lab_error(errc::InsufficientSamples, "at least 16 samples required");
  if (!(s.t_min > 0.0 && s.t_min < 1.0)) throw lab_error(errc::InsufficientSamples, "t_min must lie in (0,1)");
  CurveClassification c;
  c.trace.reserve(s.samples);
  const double lt = std::log(s.t_min);
  for (int k = 0; k < s.samples; ++k) {
    const double t = k == s.samples - 1 ? s.t_min : std::exp(lt * k / (s.samples - 1));
    OutSectionPoint q = local_map(s.sampler(t), params);
    TraceRow row{t, q.phi_s, q.r_s, q.phi_u};
    if (k > 0) {
      row.phi_s_out_unwrapped = detail::unwrap_next(c.trace.back().phi_s_out_unwrapped, q.phi_s);
      row.phi_u_out_unwrapped = detail::unwrap_next(c.trace.back().phi_u_out_unwrapped, q.phi_u);
    }
    c.trace.push_back(row);
  }
  c.sweep_s = std::fabs(c.trace.back().phi_s_out_unwrapped - c.trace.front().phi_s_out_unwrapped);
  c.sweep_u = std::fabs(c.trace.back().phi_u_out_unwrapped - c.trace.front().phi_u_out_unwrapped);
  detail::finish_classification(c, CurveKind::Helix, std::min(c.sweep_s, c.sweep_u), cfg);
  return c;
}

struct SheetSpec {
  std::function<InSectionPoint(double z, double t)> sampler;
  double z_lo = -1.0;
  double z_hi = 1.0;
  int z_samples = 65;
  int t_samples = 2000;
  double t_min = 1e-6;
};

enum class CutAngle { PhiS, PhiU };

struct CutPlane {
  CutAngle angle = CutAngle::PhiS;
  double value = 0.0;
};

// Traces the image sheet on the level set {cut angle = value mod 2pi}; the trace is classified
// in polar form (r_s, other angle) ordered by decreasing segment parameter.
inline CurveClassification classify_sheet_section(const SheetSpec& sh, const CutPlane& cut,
                                                  const BifocusParams& params,
                                                  const ClassifierConfig& cfg = {}) {
  if (sh.z_samples < 2 || sh.t_samples < 16)
    throw lab_error(errc::InsufficientSamples, "sheet grid too small");
  if (!(sh.t_min > 0.0 && sh.t_min < 1.0)) throw lab_error(errc::InsufficientSamples, "t_min must lie in (0,1)");
  const int nz = sh.z_samples, nt = sh.t_samples;
  struct Node {
    double t, lr, us, uu;
  };
  std::vector<Node> g(static_cast<std::size_t>(nz) * nt);
  auto at = [&](int it, int iz) -> Node& { return g[static_cast<std::size_t>(it) * nz + iz]; };
  const double lt = std::log(sh.t_min);
  for (int it = 0; it < nt; ++it) {
    const double t = it == nt - 1 ? sh.t_min : std::exp(lt * it / (nt - 1));
    for (int iz = 0; iz < nz; ++iz) {
      const double z = sh.z_lo + (sh.z_hi - sh.z_lo) * iz / (nz - 1);
      OutSectionPoint q = local_map(sh.sampler(z, t), params);
      Node n{t, std::log(q.r_s), q.phi_s, q.phi_u};
      if (it > 0) {
        n.us = detail::unwrap_next(at(it - 1, iz).us, q.phi_s);
        n.uu = detail::unwrap_next(at(it - 1, iz).uu, q.phi_u);
      } else if (iz > 0) {
        n.us = detail::unwrap_next(at(0, iz - 1).us, q.phi_s);
        n.uu = detail::unwrap_next(at(0, iz - 1).uu, q.phi_u);
      }
      at(it, iz) = n;
    }
  }
  auto cut_of = [&](const Node& n) { return cut.angle == CutAngle::PhiS ? n.us : n.uu; };
  const double tp = two_pi();
  CurveClassification c;
  auto edge = [&](const Node& a, const Node& b) {
    const double ua = cut_of(a), ub = cut_of(b);
    const double lo = std::min(ua, ub), hi = std::max(ua, ub);
    if (hi == lo) return;
    const long m0 = static_cast<long>(std::ceil((lo - cut.value) / tp));
    const long m1 = static_cast<long>(std::floor((hi - cut.value) / tp));
    for (long m = m0; m <= m1; ++m) {
      const double level = cut.value + tp * static_cast<double>(m);
      if (level == hi && ub != hi) continue;
      const double f = (level - ua) / (ub - ua);
      TraceRow r;
      r.t = std::exp(std::log(a.t) + f * (std::log(b.t) - std::log(a.t)));
      r.r_s_out = std::exp(a.lr + f * (b.lr - a.lr));
      r.phi_s_out_unwrapped = a.us + f * (b.us - a.us);
      r.phi_u_out_unwrapped = a.uu + f * (b.uu - a.uu);
      c.trace.push_back(r);
    }
  };
  for (int it = 0; it < nt; ++it)
    for (int iz = 0; iz < nz; ++iz) {
      if (iz + 1 < nz) edge(at(it, iz), at(it, iz + 1));
      if (it + 1 < nt) edge(at(it, iz), at(it + 1, iz));
    }
  if (c.trace.empty()) throw lab_error(errc::EmptySection, "sampled sheet misses the cut plane");
  std::stable_sort(c.trace.begin(), c.trace.end(),
                   [](const TraceRow& x, const TraceRow& y) { return x.t > y.t; });
  c.sweep_s = std::fabs(c.trace.back().phi_s_out_unwrapped - c.trace.front().phi_s_out_unwrapped);
  c.sweep_u = std::fabs(c.trace.back().phi_u_out_unwrapped - c.trace.front().phi_u_out_unwrapped);
  const double sweep = cut.angle == CutAngle::PhiS ? c.sweep_u : c.sweep_s;
  detail::finish_classification(c, CurveKind::Spiral, sweep, cfg);
  return c;
}

}  // namespace bifocus
