#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bifocus/io.hpp"

using namespace bifocus;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_s;
  std::function<Outcome()> check;
};

std::string lab_path;
fs::path preset_dir, out_dir;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_preset(const std::string& name) { return json::parse(slurp(preset_dir / (name + ".json"))); }

std::string g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

BifocusParams params(double a1, double a2 = 1, double w1 = 1, double w2 = 1) {
  BifocusParams p;
  p.alpha1 = a1;
  p.alpha2 = a2;
  p.omega1 = w1;
  p.omega2 = w2;
  return p;
}

BifocusParams delta2_params() { return params_from_json(load_preset("delta2").at("params")); }

Outcome local_map_oracle() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ang(0, two_pi()), lr(std::log(1e-4), 0.0);
  double worst = 0;
  for (const auto& p : {delta2_params(), params(1.7, 0.9, 1.3, 0.6)})
    for (int k = 0; k < 50; ++k) {
      const InSectionPoint in{ang(rng), std::exp(lr(rng)), ang(rng)};
      const OutSectionPoint a = local_map(in, p);
      const OutSectionPoint b = flow_to_exit(in, p).point;
      worst = std::max({worst, std::fabs(a.r_s - b.r_s), angle_distance(a.phi_s, b.phi_s), angle_distance(a.phi_u, b.phi_u)});
    }
  return {worst < 1e-8, "max coordinate error " + g(worst) + " over 100 points"};
}

Outcome inverse_identity() {
  const BifocusParams p = params(2.3, 1.1, 0.7, 1.9);
  double worst = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j)
      for (int k = 0; k < 10; ++k) {
        const InSectionPoint in{two_pi() * i / 10, std::exp(std::log(1e-6) * j / 9), two_pi() * k / 10};
        const InSectionPoint back = local_map_inverse(local_map(in, p), p);
        worst = std::max({worst, angle_distance(in.phi_s, back.phi_s), std::fabs(in.r_u - back.r_u) / in.r_u,
                          angle_distance(in.phi_u, back.phi_u)});
      }
  return {worst < 1e-12, "max deviation " + g(worst) + " on 1000 points (radius relative)"};
}

Outcome tec2_grid() {
  const std::array<double, 5> deltas{1.1, 1.5, 2.0, 2.5, 4.0};
  const std::array<double, 4> etas{0.0, 0.5, 1.0, 3.0};
  int agree = 0;
  for (double d : deltas)
    for (double e : etas) {
      SlabConfig cfg;
      cfg.eta = e;
      if (min_index_tec2(params(d), cfg) == min_index_tec2_closed_form(params(d), cfg)) ++agree;
    }
  const Tec2Scan s = tec2_scan(params(2), SlabConfig{});
  const bool boundary = s.N0 == 1 && s.equal_at == std::vector<int>{1};
  return {agree == 20 && boundary,
          std::to_string(agree) + "/20 grid points agree; (2,1,0): N0=" + std::to_string(s.N0) +
              (boundary ? ", equality at N=1" : ", equality not detected at N=1 alone")};
}

Outcome two_components() {
  const json pr = load_preset("delta2");
  IntersectionOptions o;
  o.resolution = 128;
  const IntersectionResult r =
      intersection_components(3, 3, delta2_params(), model_from_json(pr.value("model", json::object())),
                              slab_from_json(pr.value("slab", json::object())), o);
  const int doubled = r.doubled_count.value_or(-1);
  return {r.count() == 2 && doubled == 2,
          std::to_string(r.count()) + " components at 128, " + std::to_string(doubled) + " at 256"};
}

Outcome hyperbolicity_pattern() {
  const BifocusParams p = delta2_params();
  const json pr = load_preset("delta2");
  const GlobalMapModel m = model_from_json(pr.value("model", json::object()));
  const SlabConfig cfg = slab_from_json(pr.value("slab", json::object()));
  std::vector<Symbol> alphabet;
  for (int N : pr.at("horseshoe").at("slabs").get<std::vector<int>>())
    for (int k : {1, 2}) alphabet.push_back({N, k});
  std::vector<Itinerary> words;
  std::vector<std::vector<Symbol>> layer{{}};
  for (int len = 1; len <= 3; ++len) {
    std::vector<std::vector<Symbol>> next;
    for (const auto& w : layer)
      for (const auto& s : alphabet) {
        auto x = w;
        x.push_back(s);
        next.push_back(x);
        Itinerary it;
        it.word = x;
        words.push_back(it);
      }
    layer = next;
  }
  int good = 0;
  double worst_lyap = 0;
  std::string first_bad;
  for (const auto& w : words) {
    try {
      const PeriodicOrbit o = find_periodic_orbit(w, p, m, cfg);
      bool real = true;
      for (const auto& e : o.spectrum) real = real && e.im == 0;
      const double m1 = to_double(o.spectrum[0].modulus()), m3 = to_double(o.spectrum[2].modulus());
      const LyapunovResult l = lyapunov_periodic(o, p, m);
      const auto ref = orbit_log_moduli(o);
      double dev = 0;
      for (int i = 0; i < 3; ++i) dev = std::max(dev, std::fabs(l.exponents[i] - ref[i]));
      worst_lyap = std::max(worst_lyap, dev);
      if (real && m1 < 0.1 && m3 > 10 && dev < 1e-6) ++good;
      else if (first_bad.empty()) first_bad = itinerary_string(w);
    } catch (const lab_error& e) {
      if (first_bad.empty()) first_bad = itinerary_string(w) + " (" + e.name() + ")";
    }
  }
  const int total = static_cast<int>(words.size());
  return {good == total, std::to_string(good) + "/" + std::to_string(total) + " orbits match; max Lyapunov deviation " +
                             g(worst_lyap) + (first_bad.empty() ? "" : "; first failure " + first_bad)};
}

Outcome dissipativity() {
  double lo = 1e300, hi = 0;
  for (const auto& p : {params(2), params(1.5, 1, 3, 0.7), params(3, 1.2, 0.5, 2)})
    for (int i = 0; i <= 30; ++i) {
      const double r = std::exp(std::log(1e-6) + (std::log(1e-3) - std::log(1e-6)) * i / 30);
      for (double a : {0.0, 1.0, 2.5, -2.0}) {
        const RectPoint x{r * std::cos(a), r * std::sin(a), 0.4 * a};
        const double ratio = std::fabs(det(return_map_jacobian_analytic(x, p, GlobalMapModel{}))) /
                             (p.delta() * std::pow(r, 2 * (p.delta() - 1)));
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
      }
    }
  return {lo >= 0.8 && hi <= 1.25, "ratio range [" + g(lo) + ", " + g(hi) + "]"};
}

Outcome contraction() {
  const json pr = load_preset("delta2");
  const ContractionResult c =
      contraction_rates(3, 3, delta2_params(), model_from_json(pr.value("model", json::object())),
                        slab_from_json(pr.value("slab", json::object())), pr.at("horseshoe").at("depth").get<int>());
  return {c.nu_h < 1 && c.nu_v < 1, "nu_h " + g(c.nu_h) + ", nu_v " + g(c.nu_v)};
}

Outcome henon_family() {
  double worst_res = 0, worst_det = 0;
  int cells = 0;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      const HenonParams hp{-1.5 + 1.5 * i / 9, -1.0 + 2.0 * j / 9};
      for (const auto& f : henon_fixed_points(hp)) {
        worst_res = std::max(worst_res, std::fabs(f.z * f.z + (hp.b_tilde - 1) * f.z + hp.a_tilde));
        worst_res = std::max(worst_res, max_abs(henon_limit_map(f, hp) - f));
      }
      for (double z : {-2.0, 0.0, 0.7}) {
        worst_det = std::max(worst_det, std::fabs(henon_reduced_jacobian_det(hp, z) + hp.b_tilde));
        const Mat3<double> jm = henon_limit_jacobian({z, 0.1, z}, hp);
        worst_det = std::max(worst_det, std::fabs(jm[1][1] * jm[2][2] - jm[1][2] * jm[2][1] + hp.b_tilde));
      }
      ++cells;
    }
  return {cells == 100 && worst_res < 1e-12 && worst_det < 1e-12,
          "fixed-point residual " + g(worst_res) + ", determinant error " + g(worst_det) + " (b in [-1, 1])"};
}

Outcome normal_form_radius() {
  double worst = 0;
  for (double mu : {0.01, 0.04, 0.09})
    for (double a : {0.5, 1.0, 2.0}) {
      NormalFormParams nf;
      nf.mu = mu;
      nf.a_mu = a;
      nf.hot_enabled = false;
      CylPoint c{0.3, 0.0, 1.0};
      for (int k = 0; k < 20000; ++k) c = normal_form_map(c, nf).point;
      worst = std::max(worst, std::fabs(c.r - std::sqrt(mu / a)));
    }
  return {worst < 1e-6, "max radius error " + g(worst) + " over 9 combinations"};
}

Outcome classification() {
  NormalFormParams nf;
  nf.hot_enabled = false;
  nf.mu = -0.01;
  const AttractorClass sink = classify_attractor(nf, {0.1, 0.0, 0.1}, 100000);
  nf.mu = 0.04;
  const AttractorClass circle = classify_attractor(nf, {0.5, 0.0, 0.1}, 100000);
  const json sw = load_preset("henon-grid").at("sweep");
  auto axis = [&](const char* k, int i) {
    const json& a = sw.at(k);
    const int n = a.at("n").get<int>();
    return a.at("from").get<double>() + (a.at("to").get<double>() - a.at("from").get<double>()) * i / (n - 1);
  };
  const long steps = sw.at("n_steps").get<long>();
  std::optional<AttractorClass> documented;
  int strange = 0;
  for (int i = 0; i < sw.at("a").at("n").get<int>(); ++i)
    for (int j = 0; j < sw.at("b").at("n").get<int>(); ++j) {
      const HenonParams hp{axis("a", i), axis("b", j)};
      const AttractorClass c = classify_attractor(hp, {0, 0, 0}, steps);
      if (c.kind == AttractorKind::StrangeAttractor) ++strange;
      if (hp.a_tilde == -1.4 && hp.b_tilde == 0.3) documented = c;
    }
  const bool ok_sink = sink.kind == AttractorKind::Sink && sink.lyapunov[0] < -1e-3;
  const bool ok_circle = circle.kind == AttractorKind::InvariantCircle && std::fabs(circle.lyapunov[0]) < 1e-3;
  const bool ok_strange = documented && documented->kind == AttractorKind::StrangeAttractor &&
                          documented->lyapunov[0] > 1e-2 && std::isfinite(documented->evidence.max_norm);
  return {ok_sink && ok_circle && ok_strange,
          std::string("sink lmax ") + g(sink.lyapunov[0]) + ", circle lmax " + g(circle.lyapunov[0]) +
              ", cell (-1.4, 0.3) " + (documented ? attractor_kind_name(documented->kind) : "missing") + " lmax " +
              (documented ? g(documented->lyapunov[0]) : "-") + "; " + std::to_string(strange) + " strange cells"};
}

Outcome wandering() {
  const json pr = load_preset("golden");
  const json& wc = pr.at("wandering");
  WanderingDomainSpec spec;
  spec.base_index = wc.at("base_index");
  spec.tube_radius = wc.at("tube_radius");
  spec.s_samples = wc.at("s_samples");
  spec.angle_samples = wc.at("angle_samples");
  WanderingConfig cfg;
  cfg.n_iter = wc.at("n_iter");
  cfg.period_bound = wc.at("period_bound");
  cfg.margin = wc.at("margin");
  cfg.contraction_threshold = wc.at("contraction_threshold");
  cfg.monotone_tol = wc.at("monotone_tol");
  cfg.diameter_subsample = wc.at("diameter_subsample");
  cfg.omega_samples = wc.at("omega_samples");
  const DenjoyConfig dc = denjoy_from_json(pr.at("denjoy"));
  const NormalFormParams nf = normal_form_from_json(pr.at("normal_form"));

  const WanderingReport good = verify_wandering(build_gb(DenjoyCircleMap(dc), nf, spec), spec, cfg);
  const bool all_four = good.passed() && good.disjoint && good.contraction && good.periodicity && good.omega_limit_ok &&
                        good.n_iter >= 10000 && good.boundary_samples >= 1000;

  DenjoyConfig rational = dc;
  rational.omega = 1.0 / 3.0;
  const WanderingReport per = verify_wandering(build_gb(DenjoyCircleMap(rational), nf, spec), spec, cfg);
  NormalFormParams flat = nf;
  flat.gamma = 1.0;
  const WanderingReport con = verify_wandering(build_gb(DenjoyCircleMap(dc), flat, spec), spec, cfg);
  const bool neg_per = per.failure && per.failure->code == errc::PeriodicityDetected;
  const bool neg_con = con.failure && con.failure->code == errc::ContractionFailed;
  return {all_four && neg_per && neg_con,
          "golden " + std::string(all_four ? "passes" : "fails") + " (min separation " + g(good.min_separation) +
              ", k* " + (good.k_star ? std::to_string(*good.k_star) : "-") + ", " +
              std::to_string(good.boundary_samples) + " samples); omega=1/3 -> " +
              (per.failure ? errc_name(per.failure->code) : "passed") + "; gamma=1 -> " +
              (con.failure ? errc_name(con.failure->code) : "passed")};
}

int run_lab(const std::string& args) {
  const std::string cmd = "'" + lab_path + "' " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> files_under(const fs::path& d) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(d))
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), d).string());
  std::sort(out.begin(), out.end());
  return out;
}

Outcome determinism() {
  // budget per preset pair: twice the runtime budget of the criteria the preset exercises
  const std::vector<std::pair<std::string, double>> presets{
      {"delta2", 2 * (60.0 + 120.0 + 120.0)}, {"near-resonant", 2 * 5.0}, {"golden", 2 * 300.0}, {"henon-grid", 2 * 300.0}};
  std::string detail;
  bool ok = true;
  for (const auto& [name, budget] : presets) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<fs::path> dirs;
    std::vector<int> codes;
    for (int w : {1, 8}) {
      const fs::path d = out_dir / "determinism" / (name + "-w" + std::to_string(w));
      fs::remove_all(d);
      codes.push_back(run_lab("run --preset " + name + " --presets-dir '" + preset_dir.string() + "' --workers " +
                              std::to_string(w) + " --out '" + d.string() + "'"));
      dirs.push_back(d);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool same = codes[0] == 0 && codes[1] == 0;
    const auto fa = files_under(dirs[0]), fb = files_under(dirs[1]);
    same = same && !fa.empty() && fa == fb;
    if (same)
      for (const auto& f : fa) same = same && slurp(dirs[0] / f) == slurp(dirs[1] / f);
    const bool in_time = secs < budget;
    ok = ok && same && in_time;
    detail += name + (same ? " identical" : " DIFFERS") + " (" + std::to_string(fa.size()) + " files, " + g(secs) +
              " s of " + g(budget) + "); ";
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 4) {
    std::fprintf(stderr, "usage: acceptance <bifocus-lab> <presets-dir> <out-dir>\n");
    return 2;
  }
  lab_path = argv[1];
  preset_dir = argv[2];
  out_dir = argv[3];
  fs::create_directories(out_dir);

  const std::vector<Criterion> criteria{
      {1, "local map matches RK4 integration", 5, local_map_oracle},
      {2, "inverse local map identity", 1, inverse_identity},
      {3, "slab index threshold scan", 1, tec2_grid},
      {4, "two-component slab intersections", 60, two_components},
      {5, "hyperbolicity pattern of periodic orbits", 120, hyperbolicity_pattern},
      {6, "dissipativity law", 5, dissipativity},
      {7, "contraction certificate", 120, contraction},
      {8, "Henon family fixed points and determinant", 1, henon_family},
      {9, "normal-form circle radius", 10, normal_form_radius},
      {10, "attractor classification", 300, classification},
      {11, "Denjoy wandering certificate", 300, wandering},
      {12, "deterministic preset outputs", 1e9, determinism},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.ok = false;
      o.detail += "; over budget of " + g(c.budget_s) + " s";
    }
    if (!o.ok) ++failed;
    std::printf("%s [%d] %s (%.2f s) %s\n", o.ok ? "PASS" : "FAIL", c.id, c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
