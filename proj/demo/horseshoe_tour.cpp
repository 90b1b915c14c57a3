#include <cstdio>

#include "bifocus/horseshoe.hpp"

using namespace bifocus;

int main() {
  BifocusParams p;
  p.alpha1 = 2.0;
  const SlabConfig cfg;
  const GlobalMapModel model;

  const Tec2Scan scan = tec2_scan(p, cfg);
  std::printf("delta = %g, first admissible slab index N0 = %d\n", p.delta(), scan.N0);
  for (int N = 3; N <= 5; ++N) {
    const SlabIndex s = slab_radii(N, p, cfg);
    std::printf("  S_%d: radii [%.6g, %.6g]\n", N, s.a_N, s.b_N);
  }

  const IntersectionResult r = intersection_components(3, 3, p, model, cfg, IntersectionOptions{});
  std::printf("R0(S_3) meets S_3 in %d components\n", r.count());

  Itinerary w;
  w.word = {{3, 1}, {4, 2}};
  const PeriodicOrbit o = find_periodic_orbit(w, p, model, cfg);
  const auto logs = orbit_log_moduli(o);
  std::printf("orbit %s: log|mu| = %.4f %.4f %.4f\n", itinerary_string(w).c_str(), logs[0], logs[1], logs[2]);
}
