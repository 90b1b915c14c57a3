#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "core.hpp"
#include "linalg.hpp"

namespace bifocus {

struct LyapunovResult {
  std::array<double, 3> exponents{};  // descending
  double mean_log_det = 0;
  long steps = 0;
};

// QR (Benettin) estimate along a free orbit. step(x) advances the state, jac(x) is the Jacobian at x,
// inside(x) reports whether x is still in the domain; leaving it throws OrbitEscaped.
template <class T, class Step, class Jac, class Inside>
LyapunovResult lyapunov_qr(Vec3<T> x, long n_steps, long n_discard, Step&& step, Jac&& jac, Inside&& inside) {
  using std::abs;
  using std::log;
  if (n_steps <= 0) throw lab_error(errc::InsufficientSamples, "n_steps must be positive");
  for (long k = 0; k < n_discard; ++k) {
    x = step(x);
    if (!inside(x)) throw lab_error(errc::OrbitEscaped, "orbit left the domain during the transient");
  }
  Mat3<T> q = Mat3<T>::identity();
  std::array<T, 3> acc{T(0), T(0), T(0)};
  T acc_det = T(0);
  bool det_zero = false;
  std::array<bool, 3> neg_inf{false, false, false};
  for (long k = 0; k < n_steps; ++k) {
    const Mat3<T> j = jac(x);
    const T dj = abs(det(j));
    if (dj == 0) det_zero = true; else acc_det += log(dj);
    Mat3<T> nq;
    Vec3<T> rd;
    qr3(j * q, nq, rd);
    for (int i = 0; i < 3; ++i) {
      if (rd[i] == 0) neg_inf[i] = true; else acc[i] += log(rd[i]);
    }
    q = nq;
    x = step(x);
    if (!inside(x)) throw lab_error(errc::OrbitEscaped, "orbit left the domain");
  }
  LyapunovResult res;
  res.steps = n_steps;
  const double ninf = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i)
    res.exponents[i] = neg_inf[i] ? ninf : static_cast<double>(acc[i] / T(n_steps));
  res.mean_log_det = det_zero ? ninf : static_cast<double>(acc_det / T(n_steps));
  std::sort(res.exponents.begin(), res.exponents.end(), std::greater<double>());
  return res;
}

}  // namespace bifocus
