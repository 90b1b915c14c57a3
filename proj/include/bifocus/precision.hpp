#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace bifocus {

namespace mp = boost::multiprecision;

// Orbit points of the return map sit at radii near 1e-10 with Jacobian entries spanning
// thirty orders of magnitude, so spectra and nested widths are computed in these types.
using wide = mp::number<mp::cpp_bin_float<160>, mp::et_off>;
using wide_lite = mp::number<mp::cpp_bin_float<80>, mp::et_off>;

template <class T>
double to_double(const T& v) {
  return static_cast<double>(v);
}

}  // namespace bifocus
