#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bifocus/io.hpp"
#include "bifocus/parallel.hpp"

namespace fs = std::filesystem;
using namespace bifocus;

namespace {

// ---------------------------------------------------------------- logging

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };
LogLevel g_level = LogLevel::Error;

void log_at(LogLevel lvl, const std::string& msg) {
  if (static_cast<int>(lvl) > static_cast<int>(g_level)) return;
  static const char* names[] = {"error", "info", "debug"};
  std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << msg << '\n';
}
void info(const std::string& m) { log_at(LogLevel::Info, m); }
void debug(const std::string& m) { log_at(LogLevel::Debug, m); }

LogLevel parse_log_env() {
  const char* env = std::getenv("LAB_LOG");
  if (!env || !*env) return LogLevel::Error;
  const std::string v = env;
  if (v == "error") return LogLevel::Error;
  if (v == "info") return LogLevel::Info;
  if (v == "debug") return LogLevel::Debug;
  throw lab_error(errc::ConfigError, "LAB_LOG must be one of error, info, debug");
}

// Raised when a verification completes but its verdict is negative.
struct verification_failed : lab_error {
  using lab_error::lab_error;
};

const std::vector<std::string> kCommands = {"orbit",  "jacobian",      "horseshoe-verify", "periodic",     "lyapunov",
                                            "sweep",  "tangency-scan", "denjoy-build",     "denjoy-verify"};

// ---------------------------------------------------------------- configuration

json default_config() {
  json c;
  c["command"] = "";
  c["description"] = "";
  c["seed"] = 0;
  c["params"] = to_json(BifocusParams{});
  c["params"].erase("delta");
  c["model"] = to_json(GlobalMapModel{});
  c["slab"] = to_json(SlabConfig{});
  c["normal_form"] = to_json(NormalFormParams{});
  c["henon"] = to_json(HenonParams{});
  c["denjoy"] = to_json(DenjoyConfig{});
  c["orbit"] = {{"steps", 1000}, {"x0", {1e-3, 0.0, 0.0}}, {"r_floor", 1e-12}, {"reinject_r_min", 1e-6},
                {"reinject_r_max", 0.9}};
  c["jacobian"] = {{"x0", {1e-3, 0.0, 0.0}}, {"fd_step", 1e-7}};
  c["periodic"] = {{"words", json::array({"3:1"})}, {"max_length", 0}, {"slabs", {3, 4}}, {"restarts", 8}};
  c["lyapunov"] = {{"word", "3:1"}, {"x0", {1e-3, 0.0, 0.0}}, {"n_steps", 100000}, {"n_discard", 1000}, {"cycles", 8}};
  c["horseshoe"] = {{"slabs", {3, 4}},  {"resolution", 128}, {"word_length", 3}, {"depth", 4},
                    {"small", 0.1},     {"large", 10.0},     {"middle_max", 1.0}};
  c["sweep"] = {{"family", "henon"},
                {"a", {{"from", -1.4}, {"to", -1.0}, {"n", 5}}},
                {"b", {{"from", 0.2}, {"to", 0.3}, {"n", 3}}},
                {"mu", {{"from", -0.02}, {"to", 0.06}, {"n", 9}}},
                {"n_steps", 20000},
                {"x0", {0.0, 0.0, 0.0}}};
  c["tangency"] = {{"pn_word", "3:1"}, {"pm_word", "3:2"}, {"delta_from", 1.5}, {"delta_to", 2.5},
                   {"grid", 21},        {"bracket_width", 1e-3}, {"resolution", 200}, {"segment_scale", 1e-3},
                   {"images", 2}};
  c["wandering"] = {{"base_index", 0},    {"tube_radius", 0.05},   {"s_samples", 40},        {"angle_samples", 25},
                    {"n_iter", 10000},    {"period_bound", 50},    {"margin", 1e-9},         {"contraction_threshold", 1e-3},
                    {"monotone_tol", 1e-9}, {"diameter_subsample", 100}, {"omega_samples", 100}};
  return c;
}

// delta may be given but is checked against alpha1/alpha2, never taken as input.
json config_schema() {
  json s = default_config();
  s["params"]["delta"] = 0.0;
  return s;
}

void check_keys(const json& given, const json& schema, const std::string& where) {
  if (!given.is_object()) throw lab_error(errc::ConfigError, where + " must be a JSON object");
  for (auto it = given.begin(); it != given.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (!schema.contains(it.key())) throw lab_error(errc::ConfigError, "unknown config key '" + path + "'");
    const json& s = schema.at(it.key());
    if (s.is_object() && !s.empty()) check_keys(it.value(), s, path);
  }
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return text;
  }
}

void set_path(json& cfg, const std::string& dotted, const json& value) {
  json* node = &cfg;
  std::stringstream ss(dotted);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw lab_error(errc::ConfigError, "empty override key");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i]))
      throw lab_error(errc::ConfigError, "unknown override key '" + dotted + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->is_object() || !node->contains(parts.back()))
    throw lab_error(errc::ConfigError, "unknown override key '" + dotted + "'");
  (*node)[parts.back()] = value;
}

std::vector<double> parse_triplet(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw lab_error(errc::ConfigError, "expected three comma-separated numbers, got '" + text + "'");
    }
  }
  if (v.size() != 3) throw lab_error(errc::ConfigError, "expected three comma-separated numbers, got '" + text + "'");
  return v;
}

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw lab_error(errc::ConfigError, std::string("bad value for '") + key + "': " + e.what());
  }
}

Vec3<double> get_vec3(const json& j, const char* key) { return detail::read_vec3(j.at(key), key); }

struct Context {
  json cfg;
  std::string command;
  fs::path out;
  std::string format = "csv";
  int workers = 1;
  std::uint64_t seed = 0;
  BifocusParams params;
  GlobalMapModel model;
  SlabConfig slab;
  std::vector<std::string> written;

  fs::path file(const std::string& name) {
    written.push_back(name);
    return out / name;
  }
};

// Everything a config error can be detected from, checked before any computation starts.
void load_typed(Context& ctx) {
  const json& c = ctx.cfg;
  ctx.params = params_from_json(c.at("params"));
  ctx.model = model_from_json(c.at("model"));
  ctx.slab = slab_from_json(c.at("slab"));
  try {
    validate_params(ctx.params);
    validate_model(ctx.model);
  } catch (const lab_error& e) {
    throw lab_error(errc::ConfigError, std::string("invalid parameters: ") + e.what());
  }
  normal_form_from_json(c.at("normal_form"));
  henon_from_json(c.at("henon"));
  denjoy_from_json(c.at("denjoy"));
  ctx.seed = get<std::uint64_t>(c, "seed");
}

// ---------------------------------------------------------------- shared helpers

std::vector<Itinerary> enumerate_words(const std::vector<int>& slabs, int max_len) {
  std::vector<Symbol> alphabet;
  for (int n : slabs)
    for (int k = 1; k <= 2; ++k) alphabet.push_back({n, k});
  std::vector<Itinerary> out;
  std::vector<std::vector<Symbol>> layer{{}};
  for (int len = 1; len <= max_len; ++len) {
    std::vector<std::vector<Symbol>> next;
    for (const auto& w : layer)
      for (const auto& s : alphabet) {
        auto v = w;
        v.push_back(s);
        next.push_back(v);
      }
    for (const auto& w : next) out.push_back(Itinerary{w, true});
    layer = std::move(next);
  }
  return out;
}

struct OrbitOutcome {
  std::optional<PeriodicOrbit> orbit;
  std::optional<lab_error> error;
};

std::vector<OrbitOutcome> solve_words(const std::vector<Itinerary>& words, const Context& ctx, const PeriodicOptions& opt) {
  std::vector<OrbitOutcome> out(words.size());
  parallel_for(words.size(), ctx.workers, [&](std::size_t i) {
    try {
      out[i].orbit = find_periodic_orbit(words[i], ctx.params, ctx.model, ctx.slab, opt);
    } catch (const lab_error& e) {
      out[i].error = e;
    }
  });
  return out;
}

json lyapunov_check_json(const PeriodicOrbit& o, const Context& ctx) {
  const LyapunovResult ly = lyapunov_periodic(o, ctx.params, ctx.model);
  const auto lm = orbit_log_moduli(o);
  double dev = 0;
  for (int i = 0; i < 3; ++i) dev = std::max(dev, std::fabs(ly.exponents[i] - lm[i]));
  json j = to_json(ly);
  j["log_moduli"] = json::array({num(lm[0]), num(lm[1]), num(lm[2])});
  j["max_deviation"] = num(dev);
  return j;
}

// ---------------------------------------------------------------- commands

int cmd_orbit(Context& ctx) {
  const json& oc = ctx.cfg.at("orbit");
  const long steps = get<long>(oc, "steps");
  if (steps < 1) throw lab_error(errc::ConfigError, "orbit.steps must be positive");
  const Vec3<double> x0 = get_vec3(oc, "x0");
  const double r_floor = get<double>(oc, "r_floor");
  const double rmin = get<double>(oc, "reinject_r_min"), rmax = get<double>(oc, "reinject_r_max");
  if (!(rmin > 0 && rmin < rmax && rmax <= 1)) throw lab_error(errc::ConfigError, "need 0 < reinject_r_min < reinject_r_max <= 1");
  if (std::hypot(x0.x, x0.y) == 0.0) throw lab_error(errc::OnStableManifold, "x0 lies on the local stable manifold");

  std::mt19937_64 rng(ctx.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto inside = [&](const RectPoint& x) {
    const double r = std::hypot(x.x, x.y);
    return std::isfinite(r) && std::isfinite(x.z) && r > r_floor && r <= 1.0;
  };
  auto reinject = [&]() {
    const double lr = std::log(rmin) + (std::log(rmax) - std::log(rmin)) * unit(rng);
    const double a = two_pi() * unit(rng);
    const double z = -pi() + two_pi() * unit(rng);
    const double r = std::exp(lr);
    return RectPoint{r * std::cos(a), r * std::sin(a), z};
  };

  std::vector<std::array<double, 6>> rows;
  rows.reserve(static_cast<std::size_t>(steps));
  json reinjected = json::array();
  RectPoint x = x0;
  if (!inside(x)) throw lab_error(errc::OrbitEscaped, "x0 outside the section domain");
  for (long k = 0; k < steps; ++k) {
    const double r = std::hypot(x.x, x.y);
    rows.push_back({static_cast<double>(k), x.x, x.y, x.z, r, return_map_det_closed_form(x, ctx.params, ctx.model)});
    if (ctx.model.hot_scale != 0.0) rows.back()[5] = det(return_map_jacobian_analytic(x, ctx.params, ctx.model));
    RectPoint next = return_map(x, ctx.params, ctx.model);
    if (!inside(next)) {
      next = reinject();
      reinjected.push_back(k + 1);
      debug("re-injected at step " + std::to_string(k + 1));
    }
    x = next;
  }
  if (ctx.format == "csv") {
    CsvWriter w(ctx.file("orbit.csv").string());
    w.header({"step", "X", "Y", "Z", "r", "det_jac"});
    for (const auto& r : rows)
      w.row_strings({std::to_string(static_cast<long>(r[0])), fmt_double(r[1]), fmt_double(r[2]), fmt_double(r[3]),
                     fmt_double(r[4]), fmt_double(r[5])});
  } else {
    json arr = json::array();
    for (const auto& r : rows)
      arr.push_back({{"step", static_cast<long>(r[0])}, {"X", num(r[1])}, {"Y", num(r[2])}, {"Z", num(r[3])},
                     {"r", num(r[4])}, {"det_jac", num(r[5])}});
    write_json_file(ctx.file("orbit.json").string(), arr);
  }
  write_json_file(ctx.file("orbit_summary.json").string(),
                  {{"steps", steps}, {"seed", ctx.seed}, {"reinjected_at", reinjected}, {"params", to_json(ctx.params)}});
  info("orbit: " + std::to_string(steps) + " rows, " + std::to_string(reinjected.size()) + " re-injections");
  return 0;
}

int cmd_jacobian(Context& ctx) {
  const json& jc = ctx.cfg.at("jacobian");
  const Vec3<double> x0 = get_vec3(jc, "x0");
  JacobianConfig cfg;
  cfg.fd_step = get<double>(jc, "fd_step");
  const ReturnMapEval an = return_map_jacobian(x0, ctx.params, ctx.model, JacobianMode::Analytic, cfg);
  const ReturnMapEval fd = return_map_jacobian(x0, ctx.params, ctx.model, JacobianMode::FiniteDifference, cfg);
  auto mat = [](const Mat3<double>& m) {
    json a = json::array();
    for (int r = 0; r < 3; ++r) a.push_back({num(m[r][0]), num(m[r][1]), num(m[r][2])});
    return a;
  };
  json ev = json::array();
  for (const auto& e : an.eigenvalues) ev.push_back({{"re", num(e.re)}, {"im", num(e.im)}, {"modulus", num(e.modulus())}});
  write_json_file(ctx.file("jacobian.json").string(),
                  {{"point", vec_json(x0)},
                   {"image", vec_json(an.output)},
                   {"analytic", mat(an.jacobian)},
                   {"finite_difference", mat(fd.jacobian)},
                   {"row_deviation", num(jacobian_row_deviation(an.jacobian, fd.jacobian))},
                   {"det", num(an.det)},
                   {"det_closed_form", num(return_map_det_closed_form(x0, ctx.params, ctx.model))},
                   {"eigenvalues", ev}});
  return 0;
}

std::vector<Itinerary> configured_words(const json& pc) {
  std::vector<Itinerary> words;
  const int max_len = get<int>(pc, "max_length");
  if (max_len > 0) return enumerate_words(get<std::vector<int>>(pc, "slabs"), max_len);
  for (const auto& w : get<std::vector<std::string>>(pc, "words")) words.push_back(parse_word(w));
  if (words.empty()) throw lab_error(errc::ConfigError, "periodic.words is empty");
  return words;
}

int cmd_periodic(Context& ctx) {
  const json& pc = ctx.cfg.at("periodic");
  PeriodicOptions opt;
  opt.restarts = get<int>(pc, "restarts");
  const auto words = configured_words(pc);
  const auto res = solve_words(words, ctx, opt);
  json orbits = json::array();
  std::optional<lab_error> first;
  for (std::size_t i = 0; i < res.size(); ++i) {
    if (res[i].orbit) {
      orbits.push_back(to_json(*res[i].orbit));
    } else {
      orbits.push_back({{"word", itinerary_string(words[i])}, {"error", errc_name(res[i].error->code())},
                        {"detail", res[i].error->detail()}});
      if (!first) first = res[i].error;
    }
  }
  write_json_file(ctx.file("periodic.json").string(), {{"params", to_json(ctx.params)}, {"orbits", orbits}});
  if (first) throw *first;
  return 0;
}

int cmd_lyapunov(Context& ctx) {
  const json& lc = ctx.cfg.at("lyapunov");
  const std::string word = get<std::string>(lc, "word");
  json out = {{"params", to_json(ctx.params)}};
  if (!word.empty()) {
    const PeriodicOrbit o = find_periodic_orbit(parse_word(word), ctx.params, ctx.model, ctx.slab);
    const LyapunovResult ly = lyapunov_periodic(o, ctx.params, ctx.model, get<int>(lc, "cycles"));
    const auto lm = orbit_log_moduli(o);
    out["mode"] = "periodic";
    out["orbit"] = to_json(o);
    out["lyapunov"] = to_json(ly);
    out["log_moduli"] = json::array({num(lm[0]), num(lm[1]), num(lm[2])});
  } else {
    const LyapunovResult ly =
        lyapunov_spectrum(get_vec3(lc, "x0"), ctx.params, ctx.model, get<long>(lc, "n_steps"), get<long>(lc, "n_discard"));
    out["mode"] = "free";
    out["x0"] = vec_json(get_vec3(lc, "x0"));
    out["lyapunov"] = to_json(ly);
  }
  write_json_file(ctx.file("lyapunov.json").string(), out);
  return 0;
}

int cmd_horseshoe(Context& ctx) {
  const json& hc = ctx.cfg.at("horseshoe");
  const auto slabs = get<std::vector<int>>(hc, "slabs");
  if (slabs.empty()) throw lab_error(errc::ConfigError, "horseshoe.slabs is empty");
  const int resolution = get<int>(hc, "resolution");
  const int word_length = get<int>(hc, "word_length");
  const int depth = get<int>(hc, "depth");
  HyperbolicityConfig hcfg{get<double>(hc, "small"), get<double>(hc, "large"), get<double>(hc, "middle_max")};
  validate_slab_config(ctx.params, ctx.slab);

  json cert;
  cert["params"] = to_json(ctx.params);
  cert["cfg"] = {{"slab", to_json(ctx.slab)}, {"model", to_json(ctx.model)}, {"horseshoe", hc}};
  std::vector<std::string> failures;
  std::optional<errc> first_code;
  auto fail = [&](errc c, const std::string& m) {
    if (!first_code) first_code = c;
    failures.push_back(m);
  };

  const Tec2Scan scan = tec2_scan(ctx.params, ctx.slab);
  const int closed = min_index_tec2_closed_form(ctx.params, ctx.slab);
  cert["N0"] = scan.N0;
  cert["N0_closed_form"] = closed;
  cert["N0_equality_at"] = scan.equal_at;
  if (scan.N0 != closed) fail(errc::NotFound, "scanned N0 differs from the closed form");
  info("N0 = " + std::to_string(scan.N0));

  json sl = json::array();
  for (int n : slabs) {
    const SlabIndex s = slab_radii(n, ctx.params, ctx.slab);
    sl.push_back({{"N", n}, {"a_N", num(s.a_N)}, {"b_N", num(s.b_N)}, {"a_N1", num(s.a_N1)}, {"b_N1", num(s.b_N1)}});
  }
  cert["slabs"] = sl;

  json inter = json::array();
  IntersectionOptions io;
  io.resolution = resolution;
  io.workers = ctx.workers;
  for (int i : slabs)
    for (int j : slabs) {
      info("intersection " + std::to_string(i) + "," + std::to_string(j));
      const IntersectionResult r = intersection_components(i, j, ctx.params, ctx.model, ctx.slab, io);
      inter.push_back(to_json(r));
      bool full = r.count() == 2;
      for (const auto& c : r.components) full = full && c.full_intersection();
      if (!full) fail(errc::EmptyIntersection, "R0(S_" + std::to_string(i) + ") and S_" + std::to_string(j) + " do not meet in two full components");
    }
  cert["intersections"] = inter;

  const auto words = enumerate_words(slabs, word_length);
  info("periodic orbits: " + std::to_string(words.size()) + " words");
  const auto solved = solve_words(words, ctx, PeriodicOptions{});
  json orbits = json::array();
  std::vector<RectPoint> samples;
  for (std::size_t i = 0; i < solved.size(); ++i) {
    if (!solved[i].orbit) {
      orbits.push_back({{"word", itinerary_string(words[i])}, {"error", errc_name(solved[i].error->code())}});
      fail(solved[i].error->code(), "no periodic orbit for " + itinerary_string(words[i]));
      continue;
    }
    const PeriodicOrbit& o = *solved[i].orbit;
    json oj = to_json(o);
    const json ly = lyapunov_check_json(o, ctx);
    oj["lyapunov"] = ly;
    const double m1 = to_double(o.spectrum[0].modulus()), m3 = to_double(o.spectrum[2].modulus());
    bool real = true;
    for (const auto& e : o.spectrum) real = real && e.is_real();
    const bool pattern = real && m1 < hcfg.small && m3 > hcfg.large;
    oj["pattern_ok"] = pattern;
    if (!pattern) fail(errc::ParamViolation, "spectrum pattern fails for " + itinerary_string(o.word));
    if (!(ly.at("max_deviation").get<double>() <= 1e-6)) fail(errc::NoConvergence, "Lyapunov mismatch for " + itinerary_string(o.word));
    orbits.push_back(oj);
    if (o.word.word.size() == 1) samples.push_back(o.points[0]);
  }
  cert["orbits"] = orbits;
  cert["hyperbolicity"] = to_json(hyperbolicity_check(samples, ctx.params, ctx.model, hcfg));

  ContractionOptions copt;
  copt.workers = ctx.workers;
  info("contraction rates at depth " + std::to_string(depth));
  const ContractionResult cr = contraction_rates(slabs[0], slabs[0], ctx.params, ctx.model, ctx.slab, depth, copt);
  cert["nu_h"] = num(cr.nu_h);
  cert["nu_v"] = num(cr.nu_v);
  json wh = json::array(), wv = json::array();
  for (double w : cr.widths_h) wh.push_back(num(w));
  for (double w : cr.widths_v) wv.push_back(num(w));
  cert["widths_h"] = wh;
  cert["widths_v"] = wv;
  if (!(cr.nu_h < 1.0 && cr.nu_v < 1.0)) fail(errc::NoDecay, "contraction rates not below 1");

  cert["verified"] = failures.empty();
  cert["failures"] = failures;
  write_json_file(ctx.file("certificate.json").string(), cert);
  if (!failures.empty()) throw verification_failed(*first_code, failures.front());
  return 0;
}

struct Axis {
  double from = 0, to = 0;
  int n = 1;
  double at(int k) const { return n == 1 ? from : from + (to - from) * k / (n - 1); }
};

Axis get_axis(const json& j, const char* key) {
  const json& a = j.at(key);
  Axis ax{get<double>(a, "from"), get<double>(a, "to"), get<int>(a, "n")};
  if (ax.n < 1) throw lab_error(errc::ConfigError, std::string("sweep.") + key + ".n must be positive");
  return ax;
}

int cmd_sweep(Context& ctx) {
  const json& sc = ctx.cfg.at("sweep");
  const std::string family = get<std::string>(sc, "family");
  const long n_steps = get<long>(sc, "n_steps");
  const Vec3<double> x0 = get_vec3(sc, "x0");
  struct Cell {
    std::vector<double> coords;
    FamilyParams fp;
    AttractorClass cls;
  };
  std::vector<Cell> cells;
  std::vector<std::string> cols;
  if (family == "henon") {
    const Axis a = get_axis(sc, "a"), b = get_axis(sc, "b");
    const HenonParams base = henon_from_json(ctx.cfg.at("henon"));
    for (int i = 0; i < a.n; ++i)
      for (int k = 0; k < b.n; ++k) {
        HenonParams h = base;
        h.a_tilde = a.at(i);
        h.b_tilde = b.at(k);
        cells.push_back({{h.a_tilde, h.b_tilde}, h, {}});
      }
    cols = {"a", "b"};
  } else if (family == "normal_form") {
    const Axis mu = get_axis(sc, "mu");
    const NormalFormParams base = normal_form_from_json(ctx.cfg.at("normal_form"));
    for (int i = 0; i < mu.n; ++i) {
      NormalFormParams nf = base;
      nf.mu = mu.at(i);
      cells.push_back({{nf.mu}, nf, {}});
    }
    cols = {"mu"};
  } else {
    throw lab_error(errc::ConfigError, "sweep.family must be henon or normal_form");
  }
  if (n_steps < ClassifyConfig{}.min_steps) throw lab_error(errc::ConfigError, "sweep.n_steps below the classifier minimum");
  info("sweep: " + std::to_string(cells.size()) + " cells");
  parallel_for(cells.size(), ctx.workers, [&](std::size_t i) { cells[i].cls = classify_attractor(cells[i].fp, x0, n_steps); });

  cols.insert(cols.end(), {"class", "lyap1", "lyap2", "lyap3", "evidence_residual"});
  if (ctx.format == "csv") {
    CsvWriter w(ctx.file("sweep.csv").string());
    w.header(cols);
    for (const auto& c : cells) {
      std::vector<std::string> row;
      for (double v : c.coords) row.push_back(fmt_double(v));
      row.push_back(attractor_kind_name(c.cls.kind));
      for (double l : c.cls.lyapunov) row.push_back(fmt_double(l));
      row.push_back(fmt_double(c.cls.evidence.circle_residual));
      w.row_strings(row);
    }
  } else {
    json arr = json::array();
    for (const auto& c : cells) {
      json r;
      for (std::size_t k = 0; k < c.coords.size(); ++k) r[cols[k]] = num(c.coords[k]);
      r["class"] = attractor_kind_name(c.cls.kind);
      r["lyap1"] = num(c.cls.lyapunov[0]);
      r["lyap2"] = num(c.cls.lyapunov[1]);
      r["lyap3"] = num(c.cls.lyapunov[2]);
      r["evidence_residual"] = num(c.cls.evidence.circle_residual);
      arr.push_back(r);
    }
    write_json_file(ctx.file("sweep.json").string(), arr);
  }
  return 0;
}

int cmd_tangency(Context& ctx) {
  const json& tc = ctx.cfg.at("tangency");
  TangencyScanConfig cfg;
  cfg.delta_from = get<double>(tc, "delta_from");
  cfg.delta_to = get<double>(tc, "delta_to");
  cfg.grid = get<int>(tc, "grid");
  cfg.bracket_width = get<double>(tc, "bracket_width");
  cfg.resolution = get<int>(tc, "resolution");
  cfg.segment_scale = get<double>(tc, "segment_scale");
  cfg.images = get<int>(tc, "images");
  cfg.workers = ctx.workers;
  const Itinerary pn = parse_word(get<std::string>(tc, "pn_word"));
  const Itinerary pm = parse_word(get<std::string>(tc, "pm_word"));
  const TangencyScanResult res = tangency_scan(ctx.params, ctx.model, ctx.slab, pn, pm, cfg);
  json events = json::array();
  for (const auto& e : res.events)
    events.push_back({{"delta_lo", num(e.delta_lo)}, {"delta_hi", num(e.delta_hi)}, {"count_lo", e.count_lo},
                      {"count_hi", e.count_hi}, {"homoclinic", e.homoclinic}});
  json out = {{"params", to_json(ctx.params)}, {"config", tc}, {"homoclinic", res.homoclinic}, {"events", events}};
  if (ctx.format == "csv") {
    CsvWriter w(ctx.file("tangency_samples.csv").string());
    w.header({"delta", "crossings", "unstable_points", "stable_points"});
    for (const auto& s : res.samples)
      w.row_strings({fmt_double(s.delta), std::to_string(s.crossings), std::to_string(s.unstable_points),
                     std::to_string(s.stable_points)});
  } else {
    json arr = json::array();
    for (const auto& s : res.samples)
      arr.push_back({{"delta", num(s.delta)}, {"crossings", s.crossings}, {"unstable_points", s.unstable_points},
                     {"stable_points", s.stable_points}});
    out["samples"] = arr;
  }
  write_json_file(ctx.file("tangency.json").string(), out);
  return 0;
}

int cmd_denjoy_build(Context& ctx) {
  const DenjoyConfig dc = denjoy_from_json(ctx.cfg.at("denjoy"));
  const DenjoyCircleMap map(dc);
  const double C = map.circumference();

  std::size_t violations = 0;
  const int pairs = 100000;
  for (int k = 0; k < pairs; ++k) {
    const double s0 = C * k / pairs, s1 = C * (k + 0.5) / pairs;
    double d = map(s1) - map(s0);
    if (d < -0.5 * C) d += C;
    if (!(d > 0)) ++violations;
  }
  double interval_error = 0;
  for (int n = 0; n < map.interval_count(); ++n) {
    const auto nx = map.successor(n);
    if (!nx) continue;
    const auto& a = map.interval(n);
    const auto& b = map.interval(*nx);
    double d = map(a.start) - b.start;
    d -= C * std::round(d / C);
    interval_error = std::max(interval_error, std::fabs(d));
  }
  const double rho = map.rotation_number_estimate(0.0, 100000);
  write_json_file(ctx.file("denjoy_map.json").string(),
                  {{"config", to_json(dc)},
                   {"circumference", num(C)},
                   {"inserted_length", num(map.inserted_length())},
                   {"interval_count", map.interval_count()},
                   {"cycle_closed", map.cycle_closed()},
                   {"irrational_surrogate", map.irrational_surrogate()},
                   {"rotation_number_estimate", num(rho)},
                   {"monotonicity_violations", violations},
                   {"monotonicity_pairs", pairs},
                   {"interval_map_error", num(interval_error)}});
  std::vector<InsertedInterval> ivs = map.sorted_intervals();
  std::sort(ivs.begin(), ivs.end(), [](const auto& a, const auto& b) { return a.n < b.n; });
  if (ctx.format == "csv") {
    CsvWriter w(ctx.file("denjoy_intervals.csv").string());
    w.header({"n", "theta", "start", "length"});
    for (const auto& iv : ivs)
      w.row_strings({std::to_string(iv.n), fmt_double(iv.theta), fmt_double(iv.start), fmt_double(iv.length)});
  } else {
    json arr = json::array();
    for (const auto& iv : ivs)
      arr.push_back({{"n", iv.n}, {"theta", num(iv.theta)}, {"start", num(iv.start)}, {"length", num(iv.length)}});
    write_json_file(ctx.file("denjoy_intervals.json").string(), arr);
  }
  if (violations) throw verification_failed(errc::ParamViolation, "surgered circle map is not monotone");
  return 0;
}

int cmd_denjoy_verify(Context& ctx) {
  const DenjoyConfig dc = denjoy_from_json(ctx.cfg.at("denjoy"));
  const NormalFormParams nf = normal_form_from_json(ctx.cfg.at("normal_form"));
  const json& wc = ctx.cfg.at("wandering");
  WanderingDomainSpec spec{get<int>(wc, "base_index"), get<double>(wc, "tube_radius"), get<int>(wc, "s_samples"),
                           get<int>(wc, "angle_samples")};
  WanderingConfig cfg;
  cfg.n_iter = get<long>(wc, "n_iter");
  cfg.period_bound = get<int>(wc, "period_bound");
  cfg.margin = get<double>(wc, "margin");
  cfg.contraction_threshold = get<double>(wc, "contraction_threshold");
  cfg.monotone_tol = get<double>(wc, "monotone_tol");
  cfg.diameter_subsample = get<int>(wc, "diameter_subsample");
  cfg.omega_samples = get<int>(wc, "omega_samples");
  cfg.workers = ctx.workers;

  const DenjoyCircleMap circle(dc);
  const GBMap gb = build_gb(circle, nf, spec);
  const WanderingReport rep = verify_wandering(gb, spec, cfg);
  json out = to_json(rep);
  out["config"] = {{"denjoy", to_json(dc)}, {"normal_form", to_json(nf)}, {"wandering", wc}};
  write_json_file(ctx.file("wandering.json").string(), out);
  if (rep.failure) throw verification_failed(rep.failure->code, rep.failure->detail);
  return 0;
}

int dispatch(Context& ctx) {
  const std::string& c = ctx.command;
  if (c == "orbit") return cmd_orbit(ctx);
  if (c == "jacobian") return cmd_jacobian(ctx);
  if (c == "horseshoe-verify") return cmd_horseshoe(ctx);
  if (c == "periodic") return cmd_periodic(ctx);
  if (c == "lyapunov") return cmd_lyapunov(ctx);
  if (c == "sweep") return cmd_sweep(ctx);
  if (c == "tangency-scan") return cmd_tangency(ctx);
  if (c == "denjoy-build") return cmd_denjoy_build(ctx);
  if (c == "denjoy-verify") return cmd_denjoy_verify(ctx);
  throw lab_error(errc::ConfigError, "unknown command '" + c + "'");
}

// ---------------------------------------------------------------- presets

fs::path default_preset_dir() {
#ifdef BIFOCUS_PRESET_DIR
  return BIFOCUS_PRESET_DIR;
#else
  return "presets";
#endif
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw lab_error(errc::ConfigError, "cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw lab_error(errc::ConfigError, origin + ": " + e.what());
  }
}

int cmd_presets(const fs::path& dir, bool check) {
  if (!fs::is_directory(dir)) throw lab_error(errc::ConfigError, "preset directory " + dir.string() + " not found");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  bool ok = true;
  for (const auto& f : files) {
    const std::string text = read_file(f);
    const json j = parse_json_text(text, f.string());
    std::string status = "ok";
    if (check) {
      try {
        json merged = default_config();
        check_keys(j, config_schema(), "");
        merged.merge_patch(j);
        Context ctx;
        ctx.cfg = merged;
        load_typed(ctx);
        if (j.dump(2) + "\n" != text) status = "not canonical";
      } catch (const lab_error& e) {
        status = e.what();
      }
      if (status != "ok") ok = false;
    }
    std::cout << f.stem().string() << '\t' << j.value("command", "") << '\t' << j.value("description", "");
    if (check) std::cout << '\t' << status;
    std::cout << '\n';
  }
  if (files.empty()) throw lab_error(errc::ConfigError, "no presets in " + dir.string());
  return ok ? 0 : 2;
}

void write_error(const fs::path& out, const std::string& command, const lab_error& e, int exit_code,
                 std::optional<double> last_good = std::nullopt) {
  std::cerr << "error: " << e.name() << ": " << e.detail() << '\n';
  if (out.empty()) return;
  try {
    fs::create_directories(out);
    json rec = {{"status", "error"}, {"command", command}, {"code", e.name()}, {"detail", e.detail()}, {"exit_code", exit_code}};
    if (last_good) rec["last_good_delta"] = *last_good;
    write_json_file((out / "error.json").string(), rec);
  } catch (...) {
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (!args.empty() && args[0] == "run") args.erase(args.begin());
  std::reverse(args.begin(), args.end());

  CLI::App app{"bifocus-lab: numerical laboratory for bifocal homoclinic dynamics"};
  app.set_help_all_flag("--help-all");
  std::string config_path, preset_name, format, out_dir = "lab-out", x0_text, word_text, preset_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<long> steps, n_iter;
  std::optional<double> gamma, omega, mu;
  std::optional<int> resolution;
  std::vector<std::string> sets;
  bool check = false;

  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--preset", preset_name, "shipped preset name (instead of --config)");
  app.add_option("--seed", seed, "64-bit seed");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--format", format, "tabular output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--set", sets, "override a config entry, key.path=value");
  app.add_option("--steps", steps, "orbit steps");
  app.add_option("--x0", x0_text, "initial point X,Y,Z");
  app.add_option("--word", word_text, "itinerary N:k,N:k,...");
  app.add_option("--gamma", gamma, "normal contraction of the normal form");
  app.add_option("--omega", omega, "rotation number of the Denjoy map");
  app.add_option("--mu", mu, "normal-form unfolding parameter");
  app.add_option("--n-iter", n_iter, "wandering-domain iterations");
  app.add_option("--resolution", resolution, "grid or curve resolution");
  app.add_option("--presets-dir", preset_dir, "directory holding preset files");

  std::map<std::string, CLI::App*> subs;
  for (const auto& c : kCommands) subs[c] = app.add_subcommand(c)->fallthrough();
  auto* presets_cmd = app.add_subcommand("presets", "list shipped presets")->fallthrough();
  presets_cmd->add_flag("--check", check, "validate each preset and its canonical form");
  app.require_subcommand(0, 1);

  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const fs::path out = out_dir;
  std::string command;
  try {
    g_level = parse_log_env();
    const fs::path pdir = preset_dir.empty() ? default_preset_dir() : fs::path(preset_dir);
    if (presets_cmd->parsed()) return cmd_presets(pdir, check);

    json cfg = default_config();
    if (!config_path.empty() && !preset_name.empty()) throw lab_error(errc::ConfigError, "use either --config or --preset");
    if (!preset_name.empty()) config_path = (pdir / (preset_name + ".json")).string();
    if (!config_path.empty()) {
      const json given = parse_json_text(read_file(config_path), config_path);
      check_keys(given, config_schema(), "");
      cfg.merge_patch(given);
    }
    for (const auto& [name, sub] : subs)
      if (sub->parsed()) cfg["command"] = name;
    command = cfg.value("command", "");
    if (command.empty()) throw lab_error(errc::ConfigError, "no command given (subcommand or config 'command')");
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end())
      throw lab_error(errc::ConfigError, "unknown command '" + command + "'");

    if (seed) cfg["seed"] = *seed;
    if (steps) cfg["orbit"]["steps"] = *steps;
    if (!x0_text.empty()) {
      const auto v = parse_triplet(x0_text);
      for (const char* sec : {"orbit", "jacobian", "lyapunov"}) cfg[sec]["x0"] = v;
      cfg["lyapunov"]["word"] = "";
    }
    if (!word_text.empty()) {
      parse_word(word_text);
      cfg["periodic"]["words"] = json::array({word_text});
      cfg["periodic"]["max_length"] = 0;
      cfg["lyapunov"]["word"] = word_text;
    }
    if (gamma) cfg["normal_form"]["gamma"] = *gamma;
    if (omega) cfg["denjoy"]["omega"] = *omega;
    if (mu) cfg["normal_form"]["mu"] = *mu;
    if (n_iter) cfg["wandering"]["n_iter"] = *n_iter;
    if (resolution) {
      cfg["horseshoe"]["resolution"] = *resolution;
      cfg["tangency"]["resolution"] = *resolution;
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw lab_error(errc::ConfigError, "--set expects key.path=value");
      set_path(cfg, s.substr(0, eq), parse_value(s.substr(eq + 1)));
    }

    Context ctx;
    ctx.cfg = cfg;
    ctx.command = command;
    ctx.out = out;
    ctx.format = format.empty() ? "csv" : format;
    ctx.workers = workers.value_or(1);
    load_typed(ctx);
    fs::create_directories(out);
    fs::remove(out / "error.json");
    info("command " + command + ", seed " + std::to_string(ctx.seed) + ", workers " + std::to_string(ctx.workers));

    try {
      const int rc = dispatch(ctx);
      json effective = ctx.cfg;
      effective["command"] = command;
      write_json_file((out / "run.json").string(),
                      {{"command", command}, {"config", effective}, {"outputs", ctx.written}, {"status", "ok"}});
      return rc;
    } catch (const lab_error& e) {
      if (e.code() == errc::ConfigError) throw;
      std::optional<double> last_good;
      if (const auto* cl = dynamic_cast<const continuation_lost*>(&e)) last_good = cl->last_good_delta;
      write_error(out, command, e, 1, last_good);
      return 1;
    } catch (const std::exception& e) {
      write_error(out, command, lab_error(errc::NotFound, e.what()), 1);
      return 1;
    }
  } catch (const lab_error& e) {
    write_error(e.code() == errc::ConfigError ? fs::path{} : out, command, e, 2);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
