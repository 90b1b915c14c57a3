#include <cmath>
#include <cstdio>

#include "bifocus/tangency.hpp"

using namespace bifocus;

int main() {
  for (double mu : {-0.01, 0.01, 0.04}) {
    NormalFormParams nf;
    nf.mu = mu;
    nf.hot_enabled = false;
    CylPoint c{0.3, 0.0, 0.5};
    for (int k = 0; k < 20000; ++k) c = normal_form_map(c, nf).point;
    const AttractorClass a = classify_attractor(nf, {0.3, 0.0, 0.5}, 50000);
    std::printf("mu = %+.2f: r -> %.6f (expected %.6f), %s, lmax %.4g\n", mu, c.r,
                mu > 0 ? std::sqrt(mu / nf.a_mu) : 0.0, attractor_kind_name(a.kind), a.lyapunov[0]);
  }
}
