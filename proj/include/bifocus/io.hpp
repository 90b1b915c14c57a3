#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core.hpp"
#include "denjoy.hpp"
#include "horseshoe.hpp"
#include "return_map.hpp"
#include "tangency.hpp"

namespace bifocus {

using json = nlohmann::json;

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Non-finite values have no JSON literal; they are written as strings.
inline json num(double v) {
  if (std::isfinite(v)) return v;
  return fmt_double(v);
}

inline json vec_json(const Vec3<double>& v) { return json::array({num(v.x), num(v.y), num(v.z)}); }

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw lab_error(errc::ConfigError, "cannot open " + path + " for writing");
  }

  void header(const std::vector<std::string>& cols) { row_strings(cols); }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lab_error(errc::ConfigError, "cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

namespace detail {

template <class T>
void read_opt(const json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw lab_error(errc::ConfigError, std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void require_object(const json& j, const char* what) {
  if (!j.is_object()) throw lab_error(errc::ConfigError, std::string(what) + " must be a JSON object");
}

inline Vec3<double> read_vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw lab_error(errc::ConfigError, std::string(what) + " must have 3 numbers");
  try {
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  } catch (const json::exception&) {
    throw lab_error(errc::ConfigError, std::string(what) + " must have 3 numbers");
  }
}

}  // namespace detail

inline json to_json(const BifocusParams& p) {
  return {{"alpha1", p.alpha1}, {"alpha2", p.alpha2}, {"omega1", p.omega1}, {"omega2", p.omega2},
          {"lambda", p.lambda}, {"delta", p.delta()}};
}

inline BifocusParams params_from_json(const json& j) {
  detail::require_object(j, "params");
  BifocusParams p;
  detail::read_opt(j, "alpha1", p.alpha1);
  detail::read_opt(j, "alpha2", p.alpha2);
  detail::read_opt(j, "omega1", p.omega1);
  detail::read_opt(j, "omega2", p.omega2);
  detail::read_opt(j, "lambda", p.lambda);
  if (j.contains("delta")) {
    double d = 0;
    detail::read_opt(j, "delta", d);
    if (std::fabs(d - p.delta()) > 1e-12 * std::max(1.0, std::fabs(d)))
      throw lab_error(errc::ConfigError, "delta is derived from alpha1/alpha2 and disagrees with them");
  }
  return p;
}

inline json to_json(const GlobalMapModel& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m.A[r][c]);
  return {{"A", a},
          {"lambda", m.lambda},
          {"offset_dir", vec_json(m.offset_dir)},
          {"hot_scale", m.hot_scale},
          {"omega_convention", m.omega == OmegaConvention::AsPrinted ? "as_printed" : "swapped"},
          {"trig_angle", m.trig == TrigAngle::PhiU ? "phi_u" : "phi_s"}};
}

inline GlobalMapModel model_from_json(const json& j) {
  detail::require_object(j, "model");
  GlobalMapModel m;
  if (j.contains("A")) {
    const json& a = j.at("A");
    if (!a.is_array() || a.size() != 9) throw lab_error(errc::ConfigError, "model.A must have 9 numbers (row-major)");
    for (int k = 0; k < 9; ++k) {
      if (!a[k].is_number()) throw lab_error(errc::ConfigError, "model.A must have 9 numbers (row-major)");
      m.A[k / 3][k % 3] = a[k].get<double>();
    }
  }
  detail::read_opt(j, "lambda", m.lambda);
  detail::read_opt(j, "hot_scale", m.hot_scale);
  if (j.contains("offset_dir")) m.offset_dir = detail::read_vec3(j.at("offset_dir"), "model.offset_dir");
  if (j.contains("omega_convention")) {
    const std::string s = j.at("omega_convention").is_string() ? j.at("omega_convention").get<std::string>() : "";
    if (s == "as_printed") m.omega = OmegaConvention::AsPrinted;
    else if (s == "swapped") m.omega = OmegaConvention::Swapped;
    else throw lab_error(errc::ConfigError, "model.omega_convention must be as_printed or swapped");
  }
  if (j.contains("trig_angle")) {
    const std::string s = j.at("trig_angle").is_string() ? j.at("trig_angle").get<std::string>() : "";
    if (s == "phi_u") m.trig = TrigAngle::PhiU;
    else if (s == "phi_s") m.trig = TrigAngle::PhiS;
    else throw lab_error(errc::ConfigError, "model.trig_angle must be phi_u or phi_s");
  }
  return m;
}

inline json to_json(const SlabConfig& c) {
  return {{"eta", c.eta},       {"eps_out", c.eps_out}, {"c_out", c.c_out},
          {"eps_in", c.eps_in}, {"N_min", c.N_min},     {"N_max", c.N_max}};
}

inline SlabConfig slab_from_json(const json& j) {
  detail::require_object(j, "slab");
  SlabConfig c;
  detail::read_opt(j, "eta", c.eta);
  detail::read_opt(j, "eps_out", c.eps_out);
  detail::read_opt(j, "c_out", c.c_out);
  detail::read_opt(j, "eps_in", c.eps_in);
  detail::read_opt(j, "N_min", c.N_min);
  detail::read_opt(j, "N_max", c.N_max);
  return c;
}

inline json to_json(const SectionNeighbourhood& n) {
  return {{"eps_out", n.eps_out}, {"c_out", n.c_out}, {"eps_in", n.eps_in}, {"c_in", n.c_in}};
}

inline SectionNeighbourhood section_from_json(const json& j) {
  detail::require_object(j, "section");
  SectionNeighbourhood n;
  detail::read_opt(j, "eps_out", n.eps_out);
  detail::read_opt(j, "c_out", n.c_out);
  detail::read_opt(j, "eps_in", n.eps_in);
  detail::read_opt(j, "c_in", n.c_in);
  return n;
}

inline json to_json(const NormalFormParams& nf) {
  return {{"mu", nf.mu}, {"a_mu", nf.a_mu}, {"beta_mu", nf.beta_mu}, {"gamma", nf.gamma},
          {"hot_enabled", nf.hot_enabled}, {"c2", nf.c2}, {"c4", nf.c4}};
}

inline NormalFormParams normal_form_from_json(const json& j) {
  detail::require_object(j, "normal_form");
  NormalFormParams nf;
  detail::read_opt(j, "mu", nf.mu);
  detail::read_opt(j, "a_mu", nf.a_mu);
  detail::read_opt(j, "beta_mu", nf.beta_mu);
  detail::read_opt(j, "gamma", nf.gamma);
  detail::read_opt(j, "hot_enabled", nf.hot_enabled);
  detail::read_opt(j, "c2", nf.c2);
  detail::read_opt(j, "c4", nf.c4);
  return nf;
}

inline json to_json(const HenonParams& h) { return {{"a_tilde", h.a_tilde}, {"b_tilde", h.b_tilde}}; }

inline HenonParams henon_from_json(const json& j) {
  detail::require_object(j, "henon");
  HenonParams h;
  detail::read_opt(j, "a_tilde", h.a_tilde);
  detail::read_opt(j, "b_tilde", h.b_tilde);
  return h;
}

inline json to_json(const DenjoyConfig& c) {
  return {{"omega", c.omega},
          {"theta0", c.theta0},
          {"length_budget", c.length_budget},
          {"length_law", c.law == LengthLaw::Basel ? "basel" : "geometric"},
          {"geometric_ratio", c.geometric_ratio},
          {"n_intervals", c.n_intervals}};
}

inline DenjoyConfig denjoy_from_json(const json& j) {
  detail::require_object(j, "denjoy");
  DenjoyConfig c;
  detail::read_opt(j, "omega", c.omega);
  detail::read_opt(j, "theta0", c.theta0);
  detail::read_opt(j, "length_budget", c.length_budget);
  detail::read_opt(j, "geometric_ratio", c.geometric_ratio);
  detail::read_opt(j, "n_intervals", c.n_intervals);
  if (j.contains("length_law")) {
    const std::string s = j.at("length_law").is_string() ? j.at("length_law").get<std::string>() : "";
    if (s == "basel") c.law = LengthLaw::Basel;
    else if (s == "geometric") c.law = LengthLaw::Geometric;
    else throw lab_error(errc::ConfigError, "denjoy.length_law must be basel or geometric");
  }
  return c;
}

// "3:1,4:2" -> [(3,1),(4,2)]
inline Itinerary parse_word(const std::string& text) {
  Itinerary it;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    const std::size_t colon = tok.find(':');
    if (colon == std::string::npos) throw lab_error(errc::ConfigError, "word symbols look like N:k, got '" + tok + "'");
    try {
      std::size_t used = 0;
      const int n = std::stoi(tok.substr(0, colon), &used);
      if (used != colon) throw std::invalid_argument("trailing");
      const std::string ks = tok.substr(colon + 1);
      const int k = std::stoi(ks, &used);
      if (used != ks.size()) throw std::invalid_argument("trailing");
      it.word.push_back({n, k});
    } catch (const std::logic_error&) {
      throw lab_error(errc::ConfigError, "bad word symbol '" + tok + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
    if (pos == text.size()) throw lab_error(errc::ConfigError, "word ends with a comma");
  }
  if (it.word.empty()) throw lab_error(errc::ConfigError, "empty word");
  return it;
}

inline json spectrum_json(const std::array<Eigenvalue<wide>, 3>& ev) {
  json out = json::array();
  for (const auto& e : ev)
    out.push_back({{"re", num(to_double(e.re))}, {"im", num(to_double(e.im))}, {"modulus", num(to_double(e.modulus()))}});
  return out;
}

inline json to_json(const PeriodicOrbit& o) {
  json pts = json::array();
  for (const auto& p : o.points) pts.push_back(vec_json(p));
  return {{"word", itinerary_string(o.word)}, {"points", pts},           {"residual", num(o.residual)},
          {"iterations", o.iterations},       {"restart", o.restart_used}, {"spectrum", spectrum_json(o.spectrum)}};
}

inline json to_json(const LyapunovResult& r) {
  return {{"exponents", json::array({num(r.exponents[0]), num(r.exponents[1]), num(r.exponents[2])})},
          {"sum", num(r.exponents[0] + r.exponents[1] + r.exponents[2])},
          {"mean_log_det", num(r.mean_log_det)},
          {"steps", r.steps}};
}

inline json to_json(const IntersectionResult& r) {
  json comps = json::array();
  for (const auto& c : r.components)
    comps.push_back({{"cells", c.cells},
                     {"branch", c.branch},
                     {"sigma_min", num(c.sigma_min)},
                     {"sigma_max", num(c.sigma_max)},
                     {"sigma_step", num(c.sigma_step)},
                     {"full_intersection", c.full_intersection()},
                     {"source_centroid", vec_json(c.source_centroid)},
                     {"image_centroid", vec_json(c.image_centroid)}});
  json out = {{"i", r.i}, {"j", r.j}, {"resolution", r.resolution}, {"count", r.count()}, {"components", comps}};
  out["doubled_count"] = r.doubled_count ? json(*r.doubled_count) : json(nullptr);
  if (r.empty()) out["status"] = "EmptyIntersection";
  return out;
}

inline json to_json(const HyperbolicityReport& h) {
  json recs = json::array();
  for (const auto& r : h.eigenvalue_records) {
    json ev = json::array();
    for (int i = 0; i < 3; ++i) ev.push_back({{"re", num(r.re[i])}, {"im", num(r.im[i])}, {"modulus", num(r.modulus[i])}});
    recs.push_back({{"point", vec_json(r.point)}, {"eigenvalues", ev}, {"real", r.real}, {"pattern_ok", r.pattern_ok}});
  }
  return {{"sample_count", h.sample_count},
          {"eigenvalue_records", recs},
          {"complex_samples", h.complex_samples},
          {"nu_h", h.nu_h ? num(*h.nu_h) : json(nullptr)},
          {"nu_v", h.nu_v ? num(*h.nu_v) : json(nullptr)},
          {"cones_ok", h.cones_ok},
          {"thresholds", {{"small", h.thresholds.small}, {"middle_max", h.thresholds.middle_max}, {"large", h.thresholds.large}}}};
}

inline json to_json(const WanderingReport& r) {
  json diam = json::array();
  for (double d : r.diam_curve) diam.push_back(num(d));
  json om = json::array();
  for (const auto& p : r.omega_limit_samples) om.push_back(vec_json(p));
  json checks = {{"disjoint", r.disjoint},
                 {"min_separation", num(r.min_separation)},
                 {"contraction", r.contraction},
                 {"diam_monotone", r.diam_monotone},
                 {"diam_curve", diam},
                 {"k_star", r.k_star ? json(*r.k_star) : json(nullptr)},
                 {"periodicity", r.periodicity},
                 {"period_found", r.period_found ? json(*r.period_found) : json(nullptr)},
                 {"omega_limit", r.omega_limit_ok}};
  if (r.offending_pair) checks["offending_pair"] = json::array({r.offending_pair->first, r.offending_pair->second});
  json out = {{"n_iter", r.n_iter}, {"boundary_samples", r.boundary_samples}, {"checks", checks},
              {"omega_limit_samples", om}, {"passed", r.passed()}};
  if (r.failure) out["failure"] = {{"code", errc_name(r.failure->code)}, {"detail", r.failure->detail}};
  return out;
}

}  // namespace bifocus
