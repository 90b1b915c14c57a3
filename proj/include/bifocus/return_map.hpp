#pragma once

#include <array>
#include <cmath>
#include <limits>

#include "coords.hpp"
#include "core.hpp"
#include "linalg.hpp"
#include "local_flow.hpp"

namespace bifocus {

// AsPrinted: omega2 inside the trigonometric arguments and omega1 in the angular component.
enum class OmegaConvention { AsPrinted, Swapped };

// Which output angle of the local map feeds the trigonometric pair of the global map.
enum class TrigAngle { PhiU, PhiS };

struct GlobalMapModel {
  Mat3<double> A = cyclic();
  Vec3<double> offset_dir{0.0, 1.0, 0.0};
  double lambda = 0.0;
  double hot_scale = 0.0;
  OmegaConvention omega = OmegaConvention::AsPrinted;
  TrigAngle trig = TrigAngle::PhiU;

  static Mat3<double> cyclic() {
    Mat3<double> a;
    a[0][1] = 1.0;
    a[1][2] = 1.0;
    a[2][0] = 1.0;
    return a;
  }

  Vec3<double> offset() const { return lambda * offset_dir; }
};

inline void validate_model(const GlobalMapModel& m) {
  if (det(m.A) == 0.0) throw lab_error(errc::ParamViolation, "det A != 0");
  if (!std::isfinite(m.lambda) || !std::isfinite(m.hot_scale)) throw lab_error(errc::ParamViolation, "finite model");
}

namespace detail {

template <class T>
Vec3<T> hot_terms(const Vec3<T>& v, const T& scale) {
  using std::sin;
  return {scale * v.x * v.y, scale * v.x * v.x, scale * v.y * sin(v.z)};
}

template <class T>
Mat3<T> hot_jacobian(const Vec3<T>& v, const T& scale) {
  using std::cos;
  using std::sin;
  Mat3<T> h;
  h[0][0] = scale * v.y;
  h[0][1] = scale * v.x;
  h[1][0] = 2 * scale * v.x;
  h[2][1] = scale * sin(v.z);
  h[2][2] = scale * v.y * cos(v.z);
  return h;
}

struct RateCoefficients {
  double trig;
  double angle;
};

inline RateCoefficients rate_coefficients(const BifocusParams& p, OmegaConvention c) {
  if (c == OmegaConvention::AsPrinted) return {p.omega2 / p.alpha2, p.omega1 / p.alpha2};
  return {p.omega1 / p.alpha2, p.omega2 / p.alpha2};
}

}  // namespace detail

inline RectPoint global_map(const OutSectionPoint& q, const GlobalMapModel& model,
                            const SectionNeighbourhood* nbhd = nullptr) {
  if (nbhd) {
    if (q.r_s > nbhd->c_out || angle_distance(q.phi_u, 0.0) > nbhd->eps_out)
      throw lab_error(errc::OutOfNeighbourhood, "point outside C^out");
  }
  const double trig = model.trig == TrigAngle::PhiU ? q.phi_u : q.phi_s;
  Vec3<double> v{q.r_s * std::cos(trig), q.r_s * std::sin(trig), wrap_pi(q.phi_u)};
  Vec3<double> out = model.A * v + model.offset();
  if (model.hot_scale != 0.0) out += detail::hot_terms(v, model.hot_scale);
  return out;
}

// Pre-A vector of the return map: (r^delta cos psi, r^delta sin psi, chi).
template <class T>
Vec3<T> return_map_core(const Vec3<T>& p, const BifocusParams& params, const GlobalMapModel& model) {
  using std::atan2;
  using std::cos;
  using std::exp;
  using std::log;
  using std::sin;
  const T s = p.x * p.x + p.y * p.y;
  if (s == 0) throw lab_error(errc::OnStableManifold, "X = Y = 0");
  const auto k = detail::rate_coefficients(params, model.omega);
  const T half_log = log(s) / 2;
  const T rd = exp(T(params.delta()) * half_log);
  const T psi = p.z - T(k.trig) * half_log;
  const T chi = wrap_pi(atan2(p.y, p.x) - T(k.angle) * half_log);
  return {rd * cos(psi), rd * sin(psi), chi};
}

template <class T>
Vec3<T> return_map(const Vec3<T>& p, const BifocusParams& params, const GlobalMapModel& model) {
  const Vec3<T> v = return_map_core(p, params, model);
  Vec3<T> out = model.A.template cast<T>() * v + model.offset().template cast<T>();
  if (model.hot_scale != 0.0) out += detail::hot_terms(v, T(model.hot_scale));
  return out;
}

template <class T>
Mat3<T> return_map_jacobian_analytic(const Vec3<T>& p, const BifocusParams& params,
                                     const GlobalMapModel& model) {
  using std::cos;
  using std::exp;
  using std::log;
  using std::sin;
  const T s = p.x * p.x + p.y * p.y;
  if (s == 0) throw lab_error(errc::OnStableManifold, "X = Y = 0");
  const auto k = detail::rate_coefficients(params, model.omega);
  const T delta = T(params.delta());
  const T a = T(k.trig), b = T(k.angle);
  const T half_log = log(s) / 2;
  const T rd = exp(delta * half_log);
  const T rdm2 = rd / s;
  const T psi = p.z - a * half_log;
  const T c = cos(psi), sn = sin(psi);
  Mat3<T> dv;
  const T g1 = rdm2 * (delta * c + a * sn);
  const T g2 = rdm2 * (delta * sn - a * c);
  dv[0][0] = g1 * p.x;
  dv[0][1] = g1 * p.y;
  dv[0][2] = -rd * sn;
  dv[1][0] = g2 * p.x;
  dv[1][1] = g2 * p.y;
  dv[1][2] = rd * c;
  dv[2][0] = (-p.y - b * p.x) / s;
  dv[2][1] = (p.x - b * p.y) / s;
  dv[2][2] = T(0);
  Mat3<T> outer = model.A.template cast<T>();
  if (model.hot_scale != 0.0) {
    const Vec3<T> v = return_map_core(p, params, model);
    outer = outer + detail::hot_jacobian(v, T(model.hot_scale));
  }
  return outer * dv;
}

// Determinant of DR0 in closed form for the affine model: det(A) * (-delta) * r^(2(delta-1)).
template <class T>
T return_map_det_closed_form(const Vec3<T>& p, const BifocusParams& params, const GlobalMapModel& model) {
  using std::pow;
  const T s = p.x * p.x + p.y * p.y;
  return T(det(model.A)) * (-T(params.delta())) * pow(s, T(params.delta()) - 1);
}

enum class JacobianMode { Analytic, FiniteDifference };

struct JacobianConfig {
  double r_floor = 1e-12;
  double fd_step = 1e-7;
};

struct ReturnMapEval {
  RectPoint input;
  RectPoint output;
  Mat3<double> jacobian;
  double det = 0;
  std::array<Eigenvalue<double>, 3> eigenvalues;
};

inline Mat3<double> return_map_jacobian_fd(const RectPoint& p, const BifocusParams& params,
                                           const GlobalMapModel& model, double rel_step) {
  const double r = std::hypot(p.x, p.y);
  Mat3<double> j;
  for (int c = 0; c < 3; ++c) {
    const double h = rel_step * r;
    RectPoint a = p, b = p;
    a[c] += h;
    b[c] -= h;
    const RectPoint fa = return_map(a, params, model);
    const RectPoint fb = return_map(b, params, model);
    for (int i = 0; i < 3; ++i) {
      double diff = fa[i] - fb[i];
      // the angular component jumps by 2pi across its cut
      if (std::fabs(diff) > pi()) diff = wrap_pi(diff);
      j[i][c] = diff / (2 * h);
    }
  }
  return j;
}

inline ReturnMapEval return_map_jacobian(const RectPoint& p, const BifocusParams& params,
                                         const GlobalMapModel& model, JacobianMode mode,
                                         const JacobianConfig& cfg = {}) {
  const double r = std::hypot(p.x, p.y);
  if (r == 0.0) throw lab_error(errc::OnStableManifold, "X = Y = 0");
  if (r < cfg.r_floor) throw lab_error(errc::SingularInput, "r below floor");
  ReturnMapEval e;
  e.input = p;
  e.output = return_map(p, params, model);
  e.jacobian = mode == JacobianMode::Analytic ? return_map_jacobian_analytic(p, params, model)
                                              : return_map_jacobian_fd(p, params, model, cfg.fd_step);
  e.det = det(e.jacobian);
  e.eigenvalues = eigenvalues(e.jacobian);
  return e;
}

// Largest entrywise deviation, each row scaled by that row's largest reference entry.
inline double jacobian_row_deviation(const Mat3<double>& ref, const Mat3<double>& other) {
  double worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    double scale = 0.0;
    for (int j = 0; j < 3; ++j) scale = std::max(scale, std::fabs(ref[i][j]));
    if (scale == 0.0) continue;
    for (int j = 0; j < 3; ++j) worst = std::max(worst, std::fabs(ref[i][j] - other[i][j]) / scale);
  }
  return worst;
}

template <class T>
Vec3<T> residual_vector(const Vec3<T>& fx, const Vec3<T>& target) {
  Vec3<T> r = fx - target;
  if (r.y > pi<T>() || r.y < -pi<T>()) r.y = wrap_pi(r.y);
  return r;
}

struct NewtonConfig {
  int max_iter = 100;
  double tol = 1e-10;
  int max_halvings = 40;
};

// Newton iteration for R0(q) = p inside the unit section, started from seed; the step is halved while the residual grows.
inline RectPoint inverse_return_map(const RectPoint& p, const BifocusParams& params, const GlobalMapModel& model,
                                    const RectPoint& seed, const NewtonConfig& cfg = {}) {
  RectPoint q = seed;
  auto eval_res = [&](const RectPoint& x, double& out) -> bool {
    if (std::hypot(x.x, x.y) > 1.0) return false;
    RectPoint f;
    try {
      f = return_map(x, params, model);
    } catch (const lab_error&) {
      return false;
    }
    out = max_abs(residual_vector(f, p));
    return std::isfinite(out);
  };
  double res;
  if (std::hypot(q.x, q.y) == 0.0) throw lab_error(errc::SingularJacobian, "seed on W^s_loc");
  if (!eval_res(q, res)) throw lab_error(errc::SingularJacobian, "map undefined at seed");
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (std::hypot(q.x, q.y) == 0.0) throw lab_error(errc::SingularJacobian, "iterate on W^s_loc");
    Mat3<double> j = return_map_jacobian_analytic(q, params, model);
    const double dj = det(j);
    if (dj == 0.0 || !std::isfinite(dj)) throw lab_error(errc::SingularJacobian, "singular Jacobian");
    RectPoint rvec = residual_vector(return_map(q, params, model), p);
    RectPoint step;
    if (!solve3(j, rvec, step)) throw lab_error(errc::SingularJacobian, "singular Jacobian");
    double scale = 1.0;
    RectPoint next = q - step;
    double nres;
    bool ok = eval_res(next, nres);
    int halvings = 0;
    while ((!ok || nres > res) && halvings < cfg.max_halvings) {
      scale *= 0.5;
      next = q - scale * step;
      ok = eval_res(next, nres);
      ++halvings;
    }
    if (!ok) throw lab_error(errc::NoConvergence, "iterates left the domain");
    const double moved = max_abs(q - next);
    q = next;
    res = nres;
    if (res < cfg.tol && (moved <= 1e-15 * max_abs(q) || res == 0.0)) return q;
  }
  if (res < cfg.tol) return q;
  throw lab_error(errc::NoConvergence, "residual above tolerance after max iterations");
}

// Closed-form inverse of the affine model (hot_scale = 0); Z is returned in (-pi, pi].
template <class T>
Vec3<T> return_map_inverse_exact(const Vec3<T>& p, const BifocusParams& params, const GlobalMapModel& model) {
  using std::atan2;
  using std::cos;
  using std::exp;
  using std::log;
  using std::sin;
  Mat3<double> ainv;
  if (!inverse(model.A, ainv)) throw lab_error(errc::SingularJacobian, "A not invertible");
  const Vec3<T> v = ainv.template cast<T>() * (p - model.offset().template cast<T>());
  const T rho2 = v.x * v.x + v.y * v.y;
  if (rho2 == 0) throw lab_error(errc::OnUnstableManifold, "image radius zero");
  const auto k = detail::rate_coefficients(params, model.omega);
  const T log_r = log(rho2) / (2 * T(params.delta()));
  const T r = exp(log_r);
  const T psi = atan2(v.y, v.x);
  const T z = wrap_pi(psi + T(k.trig) * log_r);
  const T theta = v.z + T(k.angle) * log_r;
  return {r * cos(theta), r * sin(theta), z};
}

}  // namespace bifocus
