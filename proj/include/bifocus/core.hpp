#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include <boost/math/constants/constants.hpp>

namespace bifocus {

enum class errc {
  ParamViolation,
  OutOfSection,
  OnStableManifold,
  OnUnstableManifold,
  StepTooLarge,
  InsufficientSamples,
  EmptySection,
  OutOfNeighbourhood,
  SingularInput,
  SingularJacobian,
  NoConvergence,
  InadmissibleIndex,
  NotFound,
  ResolutionTooCoarse,
  EmptyIntersection,
  InsufficientDepth,
  NoDecay,
  WrongItinerary,
  OrbitEscaped,
  ContinuationLost,
  ManifoldEscaped,
  NegativeRadius,
  OverlapDetected,
  DisjointnessViolated,
  ContractionFailed,
  PeriodicityDetected,
  OmegaLimitInInterval,
  ConfigError
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::ParamViolation: return "ParamViolation";
    case errc::OutOfSection: return "OutOfSection";
    case errc::OnStableManifold: return "OnStableManifold";
    case errc::OnUnstableManifold: return "OnUnstableManifold";
    case errc::StepTooLarge: return "StepTooLarge";
    case errc::InsufficientSamples: return "InsufficientSamples";
    case errc::EmptySection: return "EmptySection";
    case errc::OutOfNeighbourhood: return "OutOfNeighbourhood";
    case errc::SingularInput: return "SingularInput";
    case errc::SingularJacobian: return "SingularJacobian";
    case errc::NoConvergence: return "NoConvergence";
    case errc::InadmissibleIndex: return "InadmissibleIndex";
    case errc::NotFound: return "NotFound";
    case errc::ResolutionTooCoarse: return "ResolutionTooCoarse";
    case errc::EmptyIntersection: return "EmptyIntersection";
    case errc::InsufficientDepth: return "InsufficientDepth";
    case errc::NoDecay: return "NoDecay";
    case errc::WrongItinerary: return "WrongItinerary";
    case errc::OrbitEscaped: return "OrbitEscaped";
    case errc::ContinuationLost: return "ContinuationLost";
    case errc::ManifoldEscaped: return "ManifoldEscaped";
    case errc::NegativeRadius: return "NegativeRadius";
    case errc::OverlapDetected: return "OverlapDetected";
    case errc::DisjointnessViolated: return "DisjointnessViolated";
    case errc::ContractionFailed: return "ContractionFailed";
    case errc::PeriodicityDetected: return "PeriodicityDetected";
    case errc::OmegaLimitInInterval: return "OmegaLimitInInterval";
    case errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

class lab_error : public std::runtime_error {
 public:
  lab_error(errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code), detail_(detail) {}

  errc code() const noexcept { return code_; }
  const char* name() const noexcept { return errc_name(code_); }
  const std::string& detail() const noexcept { return detail_; }

 private:
  errc code_;
  std::string detail_;
};

template <class T = double>
inline T pi() {
  return boost::math::constants::pi<T>();
}

template <class T = double>
inline T two_pi() {
  return boost::math::constants::two_pi<T>();
}

// [0, 2pi)
template <class T>
T wrap_2pi(const T& a) {
  using std::floor;
  const T tp = two_pi<T>();
  T t = a - tp * floor(a / tp);
  if (t >= tp) t -= tp;
  if (t < 0) t = 0;
  return t;
}

// (-pi, pi]
template <class T>
T wrap_pi(const T& a) {
  T t = wrap_2pi(a);
  if (t > pi<T>()) t -= two_pi<T>();
  return t;
}

inline double angle_distance(double a, double b) {
  return std::fabs(wrap_pi(a - b));
}

struct BifocusParams {
  double alpha1 = 2.0;
  double alpha2 = 1.0;
  double omega1 = 1.0;
  double omega2 = 1.0;
  double lambda = 0.0;

  double delta() const { return alpha1 / alpha2; }
};

inline double validate_params(const BifocusParams& p) {
  auto fail = [](const char* what) { throw lab_error(errc::ParamViolation, what); };
  if (!std::isfinite(p.alpha1) || !std::isfinite(p.alpha2) || !std::isfinite(p.omega1) ||
      !std::isfinite(p.omega2) || !std::isfinite(p.lambda))
    fail("finite parameters");
  if (!(p.alpha2 > 0)) fail("alpha2 > 0");
  if (!(p.alpha2 < p.alpha1)) fail("alpha2 < alpha1");
  if (!(p.omega1 > 0)) fail("omega1 > 0");
  if (!(p.omega2 > 0)) fail("omega2 > 0");
  return p.delta();
}

struct InSectionPoint {
  double phi_s = 0;
  double r_u = 0;
  double phi_u = 0;
};

struct OutSectionPoint {
  double r_s = 0;
  double phi_s = 0;
  double phi_u = 0;
};

inline InSectionPoint make_in_point(double phi_s, double r_u, double phi_u) {
  if (!(r_u >= 0.0 && r_u <= 1.0)) throw lab_error(errc::OutOfSection, "r_u outside [0,1]");
  return {wrap_2pi(phi_s), r_u, r_u == 0.0 ? 0.0 : wrap_2pi(phi_u)};
}

inline OutSectionPoint make_out_point(double r_s, double phi_s, double phi_u) {
  if (!(r_s >= 0.0 && r_s <= 1.0)) throw lab_error(errc::OutOfSection, "r_s outside [0,1]");
  return {r_s, r_s == 0.0 ? 0.0 : wrap_2pi(phi_s), wrap_2pi(phi_u)};
}

struct SectionNeighbourhood {
  double eps_in = 0.5;
  double c_in = 0.9;
  double eps_out = 0.5;
  double c_out = 0.9;
};

inline void validate_neighbourhood(const SectionNeighbourhood& n) {
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(n.eps_in)) throw lab_error(errc::ParamViolation, "eps_in in (0,1]");
  if (!in_unit(n.c_in)) throw lab_error(errc::ParamViolation, "c_in in (0,1]");
  if (!in_unit(n.eps_out)) throw lab_error(errc::ParamViolation, "eps_out in (0,1]");
  if (!in_unit(n.c_out)) throw lab_error(errc::ParamViolation, "c_out in (0,1]");
}

}  // namespace bifocus
