#pragma once

#include <cmath>

#include "core.hpp"
#include "linalg.hpp"

namespace bifocus {

using RectPoint = Vec3<double>;

inline RectPoint to_rect(const InSectionPoint& p) {
  return {p.r_u * std::cos(p.phi_u), p.r_u * std::sin(p.phi_u), p.phi_s};
}

inline InSectionPoint from_rect(const RectPoint& q) {
  const double s = q.x * q.x + q.y * q.y;
  if (!(s <= 1.0)) throw lab_error(errc::OutOfSection, "X^2 + Y^2 > 1");
  const double r = std::sqrt(s);
  const double phi_u = r == 0.0 ? 0.0 : wrap_2pi(std::atan2(q.y, q.x));
  return {wrap_2pi(q.z), r, phi_u};
}

}  // namespace bifocus
