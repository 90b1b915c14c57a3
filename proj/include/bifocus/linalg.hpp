#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace bifocus {

template <class T>
struct Vec3 {
  T x{0}, y{0}, z{0};

  T& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  const T& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }

  template <class U>
  Vec3<U> cast() const { return {U(x), U(y), U(z)}; }
};

template <class T> Vec3<T> operator+(Vec3<T> a, const Vec3<T>& b) { return a += b; }
template <class T> Vec3<T> operator-(Vec3<T> a, const Vec3<T>& b) { return a -= b; }
template <class T> Vec3<T> operator*(const T& s, const Vec3<T>& a) { return {s * a.x, s * a.y, s * a.z}; }
template <class T> Vec3<T> operator-(const Vec3<T>& a) { return {-a.x, -a.y, -a.z}; }

template <class T> T dot(const Vec3<T>& a, const Vec3<T>& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class T>
T norm(const Vec3<T>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

template <class T>
T max_abs(const Vec3<T>& a) {
  using std::abs;
  T m = abs(a.x);
  if (abs(a.y) > m) m = abs(a.y);
  if (abs(a.z) > m) m = abs(a.z);
  return m;
}

template <class T>
struct Mat3 {
  std::array<std::array<T, 3>, 3> m{};

  static Mat3 identity() {
    Mat3 r;
    for (int i = 0; i < 3; ++i) r.m[i][i] = T(1);
    return r;
  }

  std::array<T, 3>& operator[](int i) { return m[i]; }
  const std::array<T, 3>& operator[](int i) const { return m[i]; }

  Vec3<T> col(int j) const { return {m[0][j], m[1][j], m[2][j]}; }
  void set_col(int j, const Vec3<T>& v) { m[0][j] = v.x; m[1][j] = v.y; m[2][j] = v.z; }

  template <class U>
  Mat3<U> cast() const {
    Mat3<U> r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[i][j] = U(m[i][j]);
    return r;
  }
};

template <class T>
Vec3<T> operator*(const Mat3<T>& a, const Vec3<T>& v) {
  return {a[0][0] * v.x + a[0][1] * v.y + a[0][2] * v.z,
          a[1][0] * v.x + a[1][1] * v.y + a[1][2] * v.z,
          a[2][0] * v.x + a[2][1] * v.y + a[2][2] * v.z};
}

template <class T>
Mat3<T> operator*(const Mat3<T>& a, const Mat3<T>& b) {
  Mat3<T> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T s = a[i][0] * b[0][j];
      s += a[i][1] * b[1][j];
      s += a[i][2] * b[2][j];
      r[i][j] = s;
    }
  return r;
}

template <class T>
Mat3<T> operator+(const Mat3<T>& a, const Mat3<T>& b) {
  Mat3<T> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = a[i][j] + b[i][j];
  return r;
}

template <class T>
Mat3<T> transpose(const Mat3<T>& a) {
  Mat3<T> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = a[j][i];
  return r;
}

template <class T>
T det(const Mat3<T>& a) {
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
         a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

template <class T>
T trace(const Mat3<T>& a) {
  return a[0][0] + a[1][1] + a[2][2];
}

template <class T>
T principal_minor_sum(const Mat3<T>& a) {
  return (a[0][0] * a[1][1] - a[0][1] * a[1][0]) + (a[0][0] * a[2][2] - a[0][2] * a[2][0]) +
         (a[1][1] * a[2][2] - a[1][2] * a[2][1]);
}

template <class T>
Mat3<T> adjugate(const Mat3<T>& a) {
  Mat3<T> c;
  c[0][0] = a[1][1] * a[2][2] - a[1][2] * a[2][1];
  c[0][1] = a[0][2] * a[2][1] - a[0][1] * a[2][2];
  c[0][2] = a[0][1] * a[1][2] - a[0][2] * a[1][1];
  c[1][0] = a[1][2] * a[2][0] - a[1][0] * a[2][2];
  c[1][1] = a[0][0] * a[2][2] - a[0][2] * a[2][0];
  c[1][2] = a[0][2] * a[1][0] - a[0][0] * a[1][2];
  c[2][0] = a[1][0] * a[2][1] - a[1][1] * a[2][0];
  c[2][1] = a[0][1] * a[2][0] - a[0][0] * a[2][1];
  c[2][2] = a[0][0] * a[1][1] - a[0][1] * a[1][0];
  return c;
}

template <class T>
bool inverse(const Mat3<T>& a, Mat3<T>& out) {
  T d = det(a);
  if (d == 0) return false;
  Mat3<T> c = adjugate(a);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = c[i][j] / d;
  return true;
}

// Dense Gaussian elimination with partial pivoting, row-major n x n.
template <class T>
bool solve_dense(std::vector<T> a, std::vector<T> b, int n, std::vector<T>& x) {
  using std::abs;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    T best = abs(a[k * n + k]);
    for (int i = k + 1; i < n; ++i) {
      T v = abs(a[i * n + k]);
      if (v > best) { best = v; piv = i; }
    }
    if (best == 0) return false;
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a[k * n + j], a[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (int i = k + 1; i < n; ++i) {
      T f = a[i * n + k] / a[k * n + k];
      if (f == 0) continue;
      for (int j = k; j < n; ++j) a[i * n + j] -= f * a[k * n + j];
      b[i] -= f * b[k];
    }
  }
  x.assign(n, T(0));
  for (int i = n - 1; i >= 0; --i) {
    T s = b[i];
    for (int j = i + 1; j < n; ++j) s -= a[i * n + j] * x[j];
    x[i] = s / a[i * n + i];
  }
  return true;
}

template <class T>
bool solve3(const Mat3<T>& a, const Vec3<T>& b, Vec3<T>& x) {
  std::vector<T> aa(9), bb(3), xx;
  for (int i = 0; i < 3; ++i) {
    bb[i] = b[i];
    for (int j = 0; j < 3; ++j) aa[i * 3 + j] = a[i][j];
  }
  if (!solve_dense(aa, bb, 3, xx)) return false;
  x = {xx[0], xx[1], xx[2]};
  return true;
}

template <class T>
struct Eigenvalue {
  T re{0}, im{0};

  T modulus() const {
    using std::sqrt;
    using std::abs;
    return im == 0 ? abs(re) : sqrt(re * re + im * im);
  }
  bool is_real() const { return im == 0; }
};

namespace detail {

template <class T>
T cubic_eval(const T& t, const T& m, const T& d, const T& x) {
  return ((x - t) * x + m) * x - d;
}

// Root of x^3 - t x^2 + m x - d on [lo, hi] with a sign change; bisection then Newton polish.
template <class T>
T cubic_root_bracketed(const T& t, const T& m, const T& d, T lo, T hi) {
  using std::abs;
  T flo = cubic_eval(t, m, d, lo);
  const int max_iter = std::numeric_limits<T>::digits + 2200;
  for (int it = 0; it < max_iter; ++it) {
    T mid = (lo + hi) / 2;
    if (mid == lo || mid == hi) break;
    T fm = cubic_eval(t, m, d, mid);
    if (fm == 0) return mid;
    if ((fm < 0) == (flo < 0)) { lo = mid; flo = fm; } else { hi = mid; }
  }
  T x = (lo + hi) / 2;
  for (int it = 0; it < 4; ++it) {
    T f = cubic_eval(t, m, d, x);
    T df = (3 * x - 2 * t) * x + m;
    if (df == 0) break;
    T nx = x - f / df;
    if (!(nx >= lo && nx <= hi)) break;
    x = nx;
  }
  return x;
}

}  // namespace detail

// Spectrum of a real 3x3 matrix from its characteristic polynomial, sorted by modulus ascending.
template <class T>
std::array<Eigenvalue<T>, 3> eigenvalues(const Mat3<T>& a) {
  using std::abs;
  using std::sqrt;
  const T t = trace(a);
  const T m = principal_minor_sum(a);
  const T d = det(a);
  T bound = T(1) + std::max({abs(t), abs(m), abs(d)});

  // critical points of p(x) = x^3 - t x^2 + m x - d
  std::vector<T> crit;
  T disc = t * t - 3 * m;
  if (disc > 0) {
    T sq = sqrt(disc);
    T big = t >= 0 ? (t + sq) / 3 : (t - sq) / 3;
    T small = big != 0 ? m / (3 * big) : T(0);
    crit = {std::min(big, small), std::max(big, small)};
  }
  std::vector<T> pts;
  pts.push_back(-bound);
  for (auto& c : crit) pts.push_back(c);
  pts.push_back(bound);

  std::vector<T> roots;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
    T lo = pts[k], hi = pts[k + 1];
    T flo = detail::cubic_eval(t, m, d, lo);
    T fhi = detail::cubic_eval(t, m, d, hi);
    if (flo == 0) {
      if (roots.empty() || roots.back() != lo) roots.push_back(lo);
      continue;
    }
    if (fhi == 0) {
      roots.push_back(hi);
      continue;
    }
    if ((flo < 0) != (fhi < 0)) roots.push_back(detail::cubic_root_bracketed(t, m, d, lo, hi));
  }

  std::array<Eigenvalue<T>, 3> ev;
  if (roots.size() >= 3) {
    for (int i = 0; i < 3; ++i) ev[i] = {roots[i], T(0)};
  } else {
    T rho = roots.empty() ? T(0) : roots[0];
    for (auto& r : roots)
      if (abs(r) > abs(rho)) rho = r;
    // remaining quadratic x^2 - s x + q
    T q, s;
    if (rho != 0) {
      q = d / rho;
      T s1 = t - rho;
      T mq = m - q;
      T s2 = mq / rho;
      // pick the form with the milder cancellation
      T k1 = std::max(abs(t), abs(rho)) * abs(mq);
      T k2 = std::max(abs(m), abs(q)) * abs(s1);
      s = (k1 <= k2) ? s1 : s2;
      if (s1 == 0 && mq != 0) s = s2;
      if (mq == 0 && s1 != 0) s = s1;
    } else {
      q = m;
      s = t;
    }
    T dq = s * s / 4 - q;
    ev[0] = {rho, T(0)};
    if (dq >= 0) {
      T sq = sqrt(dq);
      T r1 = s >= 0 ? s / 2 + sq : s / 2 - sq;
      T r2 = r1 != 0 ? q / r1 : T(0);
      ev[1] = {r1, T(0)};
      ev[2] = {r2, T(0)};
    } else {
      T im = sqrt(-dq);
      ev[1] = {s / 2, im};
      ev[2] = {s / 2, -im};
    }
  }
  std::sort(ev.begin(), ev.end(), [](const Eigenvalue<T>& x, const Eigenvalue<T>& y) {
    if (x.modulus() != y.modulus()) return x.modulus() < y.modulus();
    return x.im > y.im;
  });
  return ev;
}

// Unit null vector of (a - mu I) for a real simple eigenvalue mu.
template <class T>
Vec3<T> eigenvector(const Mat3<T>& a, const T& mu) {
  Mat3<T> b = a;
  for (int i = 0; i < 3; ++i) b[i][i] -= mu;
  Vec3<T> r0{b[0][0], b[0][1], b[0][2]};
  Vec3<T> r1{b[1][0], b[1][1], b[1][2]};
  Vec3<T> r2{b[2][0], b[2][1], b[2][2]};
  // normalise rows before crossing so that graded rows do not dominate
  auto unit = [](Vec3<T> v) {
    T n = norm(v);
    return n == 0 ? v : (T(1) / n) * v;
  };
  r0 = unit(r0); r1 = unit(r1); r2 = unit(r2);
  Vec3<T> c[3] = {cross(r0, r1), cross(r0, r2), cross(r1, r2)};
  int best = 0;
  T bn = norm(c[0]);
  for (int k = 1; k < 3; ++k) {
    T n = norm(c[k]);
    if (n > bn) { bn = n; best = k; }
  }
  if (bn == 0) return {T(1), T(0), T(0)};
  return (T(1) / bn) * c[best];
}

// Modified Gram-Schmidt QR of a 3x3 matrix; diagonal of R returned as absolute values.
// A zero column yields a zero diagonal entry and an arbitrary orthonormal completion.
template <class T>
void qr3(const Mat3<T>& a, Mat3<T>& q, Vec3<T>& rdiag) {
  using std::abs;
  Vec3<T> v1 = a.col(0), v2 = a.col(1), v3 = a.col(2);
  Vec3<T> q1, q2, q3;

  T n1 = norm(v1);
  if (n1 > 0) {
    q1 = (T(1) / n1) * v1;
  } else {
    q1 = {T(1), T(0), T(0)};
  }
  for (int pass = 0; pass < 2; ++pass) v2 -= dot(q1, v2) * q1;
  T n2 = norm(v2);
  if (n2 > 0) {
    q2 = (T(1) / n2) * v2;
  } else {
    Vec3<T> trial{T(0), T(1), T(0)};
    if (abs(q1.y) > T(0.9)) trial = {T(0), T(0), T(1)};
    for (int pass = 0; pass < 2; ++pass) trial -= dot(q1, trial) * q1;
    q2 = (T(1) / norm(trial)) * trial;
  }
  q3 = cross(q1, q2);
  T r33 = dot(q3, v3);
  q.set_col(0, q1);
  q.set_col(1, q2);
  q.set_col(2, q3);
  rdiag = {n1, n2, abs(r33)};
}

}  // namespace bifocus
