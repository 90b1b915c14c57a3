#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "bifocus/horseshoe.hpp"

using namespace bifocus;

namespace {

BifocusParams params(double a1, double a2 = 1, double w1 = 1, double w2 = 1) {
  BifocusParams p;
  p.alpha1 = a1;
  p.alpha2 = a2;
  p.omega1 = w1;
  p.omega2 = w2;
  return p;
}

template <class F>
errc code_of(F&& f) {
  try {
    f();
  } catch (const lab_error& e) {
    return e.code();
  }
  return errc::ConfigError;
}

Itinerary word_of(std::vector<Symbol> s) {
  Itinerary it;
  it.word = std::move(s);
  return it;
}

const PeriodicOrbit& fixed_point_s3() {
  static const PeriodicOrbit o = find_periodic_orbit(word_of({{3, 1}}), params(2), GlobalMapModel{}, SlabConfig{});
  return o;
}

}  // namespace

TEST(SlabRadii, FirstTwoIndicesForTheSquareRate) {
  const SlabIndex s1 = slab_radii(1, params(2), SlabConfig{});
  EXPECT_NEAR(s1.a_N, 3.48734e-6, 1e-11);
  EXPECT_NEAR(s1.b_N, 1.86744e-3, 1e-8);
  EXPECT_DOUBLE_EQ(s1.a_N, std::exp(-4 * pi()));
  const SlabIndex s2 = slab_radii(2, params(2), SlabConfig{});
  EXPECT_NEAR(s2.a_N, 1.21615e-11, 1e-16);
  EXPECT_NEAR(s2.b_N, std::exp(-4 * pi()), 1e-20);
  EXPECT_EQ(s1.b_N1, s2.b_N);
}

TEST(SlabRadii, IndexBelowTheBoundIsInadmissible) {
  SlabConfig cfg;
  cfg.c_out = 0.1;
  EXPECT_GT(admissible_min_index(params(2), cfg), 0);
  EXPECT_EQ(code_of([&] { slab_radii(0, params(2), cfg); }), errc::InadmissibleIndex);
  EXPECT_EQ(code_of([] { slab_radii(-1, params(2), SlabConfig{}); }), errc::InadmissibleIndex);
}

TEST(SlabRadii, OrderingOfTheTori) {
  for (double d : {1.2, 2.0, 3.5})
    for (int N = 1; N < 6; ++N) {
      const SlabIndex s = slab_radii(N, params(d), SlabConfig{});
      EXPECT_LT(s.a_N1, s.a_N);
      EXPECT_LT(s.b_N1, s.b_N);
      EXPECT_LT(s.a_N, s.b_N);
    }
}

TEST(MinIndex, SquareRateHasEqualityAtOne) {
  const Tec2Scan s = tec2_scan(params(2), SlabConfig{});
  EXPECT_EQ(s.N0, 1);
  ASSERT_EQ(s.equal_at.size(), 1u);
  EXPECT_EQ(s.equal_at[0], 1);
  const SlabIndex s1 = slab_radii(1, params(2), SlabConfig{});
  const SlabIndex s2 = slab_radii(2, params(2), SlabConfig{});
  EXPECT_NEAR(s1.b_N1 / s1.a_N, 1.0, 1e-12);
  EXPECT_GT(s2.b_N1, s2.a_N);
}

TEST(MinIndex, CubicRateNeedsNoShift) { EXPECT_EQ(min_index_tec2(params(3), SlabConfig{}), 0); }

TEST(MinIndex, NearResonanceNeedsAHundred) { EXPECT_EQ(min_index_tec2(params(1.01), SlabConfig{}), 100); }

TEST(MinIndex, ScanAgreesWithTheClosedFormOnAGrid) {
  const std::array<double, 5> deltas{1.1, 1.5, 2.0, 2.5, 4.0};
  const std::array<double, 4> etas{0.0, 0.5, 1.0, 3.0};
  for (double d : deltas)
    for (double e : etas) {
      SlabConfig cfg;
      cfg.eta = e;
      EXPECT_EQ(min_index_tec2(params(d), cfg), min_index_tec2_closed_form(params(d), cfg)) << d << " " << e;
    }
}

TEST(Intersections, SlabThreeMeetsItselfInTwoFullPieces) {
  const IntersectionResult r = intersection_components(3, 3, params(2), GlobalMapModel{}, SlabConfig{});
  ASSERT_EQ(r.count(), 2);
  ASSERT_TRUE(r.doubled_count.has_value());
  EXPECT_EQ(*r.doubled_count, 2);
  for (const auto& c : r.components) EXPECT_TRUE(c.full_intersection());
  EXPECT_NE(r.components[0].branch, r.components[1].branch);
}

TEST(Intersections, UnreachableSlabGivesNoComponents) {
  const IntersectionResult r = intersection_components(3, 30, params(2), GlobalMapModel{}, SlabConfig{});
  EXPECT_TRUE(r.empty());
  EXPECT_EQ(r.count(), 0);
}

TEST(Intersections, CoarseGridIsRejected) {
  IntersectionOptions o;
  o.resolution = 16;
  EXPECT_EQ(code_of([&] { intersection_components(3, 3, params(2), GlobalMapModel{}, SlabConfig{}, o); }),
            errc::ResolutionTooCoarse);
}

TEST(Intersections, IndicesAtOrBelowTheShiftAreInadmissible) {
  EXPECT_EQ(code_of([] { intersection_components(1, 3, params(2), GlobalMapModel{}, SlabConfig{}); }),
            errc::InadmissibleIndex);
}

TEST(Intersections, WorkerCountDoesNotChangeTheResult) {
  IntersectionOptions a, b;
  a.verify_doubling = b.verify_doubling = false;
  b.workers = 4;
  const auto ra = intersection_components(3, 4, params(2), GlobalMapModel{}, SlabConfig{}, a);
  const auto rb = intersection_components(3, 4, params(2), GlobalMapModel{}, SlabConfig{}, b);
  ASSERT_EQ(ra.count(), rb.count());
  for (int k = 0; k < ra.count(); ++k) {
    EXPECT_EQ(ra.components[k].cells, rb.components[k].cells);
    EXPECT_EQ(ra.components[k].image_centroid.z, rb.components[k].image_centroid.z);
  }
}

TEST(SlabWidth, FirstSlabSpansTheRadiusGap) {
  const auto samples = slab_boundary_samples(1, params(2), SlabConfig{}, 33);
  EXPECT_NEAR(slab_width(samples, SlabDirection::Horizontal), 1.8639e-3, 1e-7);
  const SlabIndex s = slab_radii(1, params(2), SlabConfig{});
  EXPECT_DOUBLE_EQ(slab_width(samples, SlabDirection::Horizontal), s.b_N - s.b_N1);
}

TEST(SlabWidth, SingleSliceIsDegenerate) {
  EXPECT_EQ(slab_width({{0.2, 0.5}}, SlabDirection::Horizontal), 0.0);
  EXPECT_EQ(slab_width({{0.2, 0.5}, {0.3, 0.5}}, SlabDirection::Horizontal), 0.0);
}

TEST(SlabWidth, EmptySampleSetIsAnError) {
  EXPECT_EQ(code_of([] { slab_width({}, SlabDirection::Vertical); }), errc::InsufficientSamples);
}

TEST(PeriodicOrbits, FixedPointInSlabThree) {
  const PeriodicOrbit& o = fixed_point_s3();
  ASSERT_EQ(o.points.size(), 1u);
  EXPECT_LT(o.residual, 1e-10);
  const Vec3<wide> img = return_map(o.points_wide[0], params(2), GlobalMapModel{});
  EXPECT_TRUE(matches_symbol(o.points_wide[0], {3, 1}, params(2), SlabConfig{}));
  EXPECT_TRUE(matches_symbol(img, {3, 1}, params(2), SlabConfig{}));
  const double r = std::hypot(o.points[0].x, o.points[0].y);
  EXPECT_LT(r, 1e-8);
  EXPECT_LT(to_double(abs(img.x - o.points_wide[0].x)), 1e-10 * r);
}

TEST(PeriodicOrbits, TwoCycleJumpingBetweenSlabs) {
  const BifocusParams p = params(2);
  const PeriodicOrbit o = find_periodic_orbit(word_of({{3, 1}, {4, 1}}), p, GlobalMapModel{}, SlabConfig{});
  ASSERT_EQ(o.points.size(), 2u);
  EXPECT_LT(o.residual, 1e-10);
  Vec3<wide> x = o.points_wide[0];
  for (int step = 0; step < 4; ++step) {
    EXPECT_TRUE(matches_symbol(x, o.word.word[step % 2], p, SlabConfig{})) << step;
    x = return_map(x, p, GlobalMapModel{});
  }
}

TEST(PeriodicOrbits, WordBelowTheShiftIsInadmissible) {
  EXPECT_EQ(code_of([] { find_periodic_orbit(word_of({{1, 1}}), params(2), GlobalMapModel{}, SlabConfig{}); }),
            errc::InadmissibleIndex);
  EXPECT_EQ(code_of([] { find_periodic_orbit(word_of({}), params(2), GlobalMapModel{}, SlabConfig{}); }),
            errc::InadmissibleIndex);
}

TEST(PeriodicOrbits, EveryShortWordOverTwoSlabs) {
  const BifocusParams p = params(2);
  std::vector<Symbol> alphabet{{3, 1}, {3, 2}, {4, 1}, {4, 2}};
  int found = 0;
  for (const auto& a : alphabet) {
    EXPECT_NO_THROW(find_periodic_orbit(word_of({a}), p, GlobalMapModel{}, SlabConfig{}));
    ++found;
    for (const auto& b : alphabet) {
      const PeriodicOrbit o = find_periodic_orbit(word_of({a, b}), p, GlobalMapModel{}, SlabConfig{});
      EXPECT_LT(o.residual, 1e-10);
      ++found;
    }
  }
  EXPECT_EQ(found, 20);
}

TEST(Hyperbolicity, FixedPointHasTheSaddlePattern) {
  const PeriodicOrbit& o = fixed_point_s3();
  const HyperbolicityReport rep = hyperbolicity_check(o.points, params(2), GlobalMapModel{});
  ASSERT_EQ(rep.eigenvalue_records.size(), 1u);
  const EigenRecord& e = rep.eigenvalue_records[0];
  EXPECT_TRUE(e.real);
  EXPECT_TRUE(e.pattern_ok);
  EXPECT_GT(e.modulus[2], 10.0);
  EXPECT_LT(e.modulus[0], 0.1);
  EXPECT_TRUE(rep.cones_ok);
  EXPECT_TRUE(rep.complex_samples.empty());
}

TEST(Hyperbolicity, ComplexSampleIsSetAsideWithoutSpoilingTheCones) {
  const BifocusParams p = params(2);
  std::optional<RectPoint> complex_pt;
  for (int i = 0; i < 200 && !complex_pt; ++i)
    for (int k = 0; k < 40 && !complex_pt; ++k) {
      const double r = std::exp(-0.1 * i);
      const double a = two_pi() * k / 40;
      const RectPoint x{r * std::cos(a), r * std::sin(a), 0.3 * k};
      const auto ev = eigenvalues(return_map_jacobian_analytic(x, p, GlobalMapModel{}));
      if (ev[0].im != 0 || ev[1].im != 0 || ev[2].im != 0) complex_pt = x;
    }
  ASSERT_TRUE(complex_pt.has_value());
  std::vector<RectPoint> samples{fixed_point_s3().points[0], *complex_pt};
  const HyperbolicityReport rep = hyperbolicity_check(samples, p, GlobalMapModel{});
  ASSERT_EQ(rep.complex_samples.size(), 1u);
  EXPECT_EQ(rep.complex_samples[0], 1u);
  EXPECT_TRUE(rep.cones_ok);
}

TEST(Hyperbolicity, DistantSampleIsReportedNotFatal) {
  std::vector<RectPoint> samples{{0.4, 0.0, 0.1}};
  HyperbolicityReport rep;
  EXPECT_NO_THROW(rep = hyperbolicity_check(samples, params(2), GlobalMapModel{}));
  EXPECT_EQ(rep.sample_count, 1u);
  EXPECT_EQ(rep.eigenvalue_records.size(), 1u);
}

TEST(Lyapunov, PeriodicExponentsMatchTheMonodromy) {
  for (const auto& w : {word_of({{3, 1}}), word_of({{3, 1}, {4, 2}})}) {
    const PeriodicOrbit o = find_periodic_orbit(w, params(2), GlobalMapModel{}, SlabConfig{});
    const LyapunovResult l = lyapunov_periodic(o, params(2), GlobalMapModel{});
    const auto ref = orbit_log_moduli(o);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(l.exponents[i], ref[i], 1e-6);
    EXPECT_GT(l.exponents[0], 0.0);
    EXPECT_LT(l.exponents[2], 0.0);
    EXPECT_LT(std::fabs(l.exponents[0] + l.exponents[1] + l.exponents[2] - l.mean_log_det), 1e-8);
  }
}

TEST(Lyapunov, QrRecoversADiagonalLinearMap) {
  Mat3<double> m;
  m[0] = {0.5, 0.3, 0.0};
  m[1] = {0.0, 2.0, 0.1};
  m[2] = {0.0, 0.0, 0.1};
  const LyapunovResult l = lyapunov_qr<double>(
      RectPoint{1, 1, 1}, 2000, 10, [&](const RectPoint& x) { return m * x; },
      [&](const RectPoint&) { return m; }, [](const RectPoint&) { return true; });
  EXPECT_NEAR(l.exponents[0], std::log(2.0), 1e-9);
  EXPECT_NEAR(l.exponents[1], std::log(0.5), 1e-9);
  EXPECT_NEAR(l.exponents[2], std::log(0.1), 1e-9);
  EXPECT_NEAR(l.mean_log_det, std::log(0.1), 1e-12);
}

TEST(Lyapunov, EscapingOrbitIsReported) {
  EXPECT_EQ(code_of([] { lyapunov_spectrum({0.5, 0.0, 2.0}, params(2), GlobalMapModel{}, 1000, 0); }), errc::OrbitEscaped);
  EXPECT_EQ(code_of([] { lyapunov_spectrum({2.0, 0.0, 0.0}, params(2), GlobalMapModel{}); }), errc::OrbitEscaped);
}

TEST(Contraction, BothRatesBelowOneAtDepthFour) {
  const ContractionResult c = contraction_rates(3, 3, params(2), GlobalMapModel{}, SlabConfig{}, 4);
  EXPECT_LT(c.nu_h, 1.0);
  EXPECT_LT(c.nu_v, 1.0);
  EXPECT_EQ(c.widths_h.size(), 4u);
  EXPECT_EQ(c.widths_v.size(), 4u);
}

TEST(Contraction, DepthOneCannotFitARatio) {
  EXPECT_EQ(code_of([] { contraction_rates(3, 3, params(2), GlobalMapModel{}, SlabConfig{}, 1); }), errc::InsufficientDepth);
}

TEST(Contraction, LargeOffsetDestroysTheOverlap) {
  GlobalMapModel m;
  m.lambda = 1e-6;
  m.offset_dir = {1.0, 0.0, 0.0};
  const errc c = code_of([&] { contraction_rates(3, 3, params(2), m, SlabConfig{}, 4); });
  EXPECT_TRUE(c == errc::EmptyIntersection || c == errc::NoDecay);
}
