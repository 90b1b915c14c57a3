#include <cmath>
#include <cstdio>

#include "bifocus/denjoy.hpp"

using namespace bifocus;

int main() {
  DenjoyConfig c;
  c.omega = (std::sqrt(5.0) - 1) / 2;
  c.n_intervals = 2000;
  const DenjoyCircleMap m(c);
  std::printf("inserted %d intervals of total length %.6f, circumference %.6f\n", m.interval_count(),
              m.inserted_length(), m.circumference());
  std::printf("rotation number estimate %.8f (target %.8f)\n", m.rotation_number_estimate(0.1, 100000), c.omega);

  NormalFormParams nf;
  nf.mu = 0.04;
  nf.gamma = 0.5;
  const WanderingDomainSpec spec;
  WanderingConfig wc;
  const WanderingReport rep = verify_wandering(build_gb(m, nf, spec), spec, wc);
  std::printf("wandering domain certificate: %s, min separation %.3g\n", rep.passed() ? "passed" : "failed",
              rep.min_separation);
  if (rep.failure) std::printf("  failure: %s\n", rep.failure->detail.c_str());
}
