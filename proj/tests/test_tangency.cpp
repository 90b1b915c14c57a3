#include <random>

#include <gtest/gtest.h>

#include "bifocus/tangency.hpp"

using namespace bifocus;

namespace {

template <class F>
errc code_of(F&& f) {
  try {
    f();
  } catch (const lab_error& e) {
    return e.code();
  }
  return errc::ConfigError;
}

NormalFormParams plain_normal_form(double mu, double a = 1.0) {
  NormalFormParams nf;
  nf.mu = mu;
  nf.a_mu = a;
  nf.hot_enabled = false;
  return nf;
}

Itinerary fixed_word(int k) {
  Itinerary it;
  it.word = {{3, k}};
  return it;
}

}  // namespace

TEST(Henon, OriginMapsToTheParameter) {
  const Vec3<double> y = henon_limit_map({0, 0, 0}, HenonParams{-0.7, 0.2});
  EXPECT_EQ(y.x, 0.0);
  EXPECT_EQ(y.y, 0.0);
  EXPECT_EQ(y.z, -0.7);
}

TEST(Henon, FixedPointsForTheDegenerateFamily) {
  const auto fp = henon_fixed_points(HenonParams{0, 0});
  ASSERT_EQ(fp.size(), 2u);
  EXPECT_EQ(fp[0].z, 0.0);
  EXPECT_DOUBLE_EQ(fp[1].x, 1.0);
  EXPECT_DOUBLE_EQ(fp[1].z, 1.0);
  EXPECT_EQ(fp[1].y, 0.0);
}

TEST(Henon, FixedPointsSolveTheQuadratic) {
  const HenonParams hp{-0.5, 0.3};
  const auto fp = henon_fixed_points(hp);
  ASSERT_EQ(fp.size(), 2u);
  EXPECT_NEAR(fp[0].z, -0.43898, 1e-5);
  EXPECT_NEAR(fp[1].z, 1.13898, 1e-5);
  for (const auto& p : fp) EXPECT_LT(max_abs(henon_limit_map(p, hp) - p), 1e-12);
}

TEST(Henon, NoRealFixedPointsBeyondTheFold) { EXPECT_TRUE(henon_fixed_points(HenonParams{1.0, 0.3}).empty()); }

TEST(Henon, ReducedDeterminantIsMinusB) {
  EXPECT_DOUBLE_EQ(henon_reduced_jacobian_det(HenonParams{-1.4, 0.3}, 0.7), -0.3);
  EXPECT_DOUBLE_EQ(henon_reduced_jacobian_det(HenonParams{-1.4, 1.0}, -2.0), -1.0);
  EXPECT_EQ(henon_reduced_jacobian_det(HenonParams{-1.4, 0.0}, 5.0), 0.0);
}

TEST(Henon, ReducedDeterminantAgreesWithCentralDifferences) {
  const HenonParams hp{-1.1, 0.3};
  const double h = 1e-6;
  for (double z : {-1.0, 0.0, 0.4, 2.0}) {
    auto f = [&](double y, double zz) { return henon_limit_map({zz, y, zz}, hp); };
    const double dyy = (f(h, z).y - f(-h, z).y) / (2 * h), dyz = (f(0, z + h).y - f(0, z - h).y) / (2 * h);
    const double dzy = (f(h, z).z - f(-h, z).z) / (2 * h), dzz = (f(0, z + h).z - f(0, z - h).z) / (2 * h);
    EXPECT_NEAR(dyy * dzz - dyz * dzy, henon_reduced_jacobian_det(hp, z), 1e-6);
  }
}

TEST(Henon, DeterminantIsConstantInPhaseSpace) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-3, 3);
  for (double b : {0.3, -0.7, 1.0, -1.0})
    for (int k = 0; k < 100; ++k) EXPECT_LT(std::fabs(henon_reduced_jacobian_det({u(rng), b}, u(rng)) + b), 1e-12);
}

TEST(RotatedSaddle, QuarterRotationExample) {
  const Vec3<double> y = rotated_saddle_step({1, 0, 1}, RotatedSaddleParams{1.1, 0.25, 0.5});
  EXPECT_NEAR(y.x, 0.0, 1e-15);
  EXPECT_NEAR(y.y, 1.1, 1e-15);
  EXPECT_EQ(y.z, 0.5);
}

TEST(RotatedSaddle, AxisIsInvariant) {
  const Vec3<double> y = rotated_saddle_step({0, 0, 3}, RotatedSaddleParams{});
  EXPECT_EQ(y.x, 0.0);
  EXPECT_EQ(y.y, 0.0);
  EXPECT_EQ(y.z, 1.5);
}

TEST(RotatedSaddle, PlanarNormGrowsByTheModulus) {
  const Vec3<double> y = rotated_saddle_step({3, 4, 0}, RotatedSaddleParams{1.05, 0.6180339887498949, 0.5});
  EXPECT_NEAR(std::hypot(y.x, y.y), 5.25, 1e-14);
  Vec3<double> x{0.3, -0.2, 2.0};
  const RotatedSaddleParams rp{1.02, 0.1234, -0.8};
  for (int k = 0; k < 50; ++k) {
    const Vec3<double> n = rotated_saddle_step(x, rp);
    EXPECT_NEAR(std::hypot(n.x, n.y) / std::hypot(x.x, x.y), 1.02, 1e-13);
    EXPECT_NEAR(n.z / x.z, -0.8, 1e-15);
    x = n;
  }
}

TEST(NormalForm, AxisCircleIsFixed) {
  const NormalFormParams nf = plain_normal_form(0.04);
  const NormalFormStep s = normal_form_map({0.0, 1.0, 0.6}, nf);
  EXPECT_EQ(s.point.r, 0.0);
  EXPECT_DOUBLE_EQ(s.point.theta, 1.0 + nf.beta_mu);
  EXPECT_DOUBLE_EQ(s.point.t, nf.gamma * 0.6);
  EXPECT_FALSE(s.clamped);
}

TEST(NormalForm, RadiusConvergesToTheCircle) {
  const NormalFormParams nf = plain_normal_form(0.04);
  CylPoint p{0.5, 0.0, 1.0};
  int k = 0;
  for (; k < 1000 && std::fabs(p.r - 0.2) > 1e-6; ++k) p = normal_form_map(p, nf).point;
  EXPECT_LE(k, 1000);
  EXPECT_NEAR(p.r, 0.2, 1e-6);
}

TEST(NormalForm, NegativeParameterCollapsesToTheAxis) {
  const NormalFormParams nf = plain_normal_form(-0.01);
  CylPoint p{0.1, 0.0, 1.0};
  for (int k = 0; k < 5000; ++k) p = normal_form_map(p, nf).point;
  EXPECT_LT(p.r, 1e-12);
}

TEST(NormalForm, NegativeRadius) {
  const NormalFormParams nf = plain_normal_form(0.04);
  EXPECT_EQ(code_of([&] { normal_form_map({-0.1, 0, 0}, nf); }), errc::NegativeRadius);
  EXPECT_EQ(code_of([&] { normal_form_map({2.0, 0, 0}, nf, true); }), errc::NegativeRadius);
  const NormalFormStep s = normal_form_map({2.0, 0, 0}, nf);
  EXPECT_TRUE(s.clamped);
  EXPECT_EQ(s.point.r, 0.0);
}

TEST(NormalForm, FixedRadiusOverTheParameterGrid) {
  for (double mu : {0.01, 0.04, 0.09})
    for (double a : {0.5, 1.0, 2.0}) {
      const NormalFormParams nf = plain_normal_form(mu, a);
      CylPoint p{0.3, 0.0, 0.0};
      for (int k = 0; k < 20000; ++k) p = normal_form_map(p, nf).point;
      EXPECT_NEAR(p.r, std::sqrt(mu / a), 1e-6) << mu << " " << a;
    }
}

TEST(Classification, NormalFormCircle) {
  const AttractorClass c = classify_attractor(plain_normal_form(0.04), {0.5, 0.0, 0.1}, 100000);
  EXPECT_EQ(c.kind, AttractorKind::InvariantCircle);
  EXPECT_NEAR(c.evidence.circle_radius, 0.2, 1e-4);
  EXPECT_LT(std::fabs(c.lyapunov[0]), 1e-3);
}

TEST(Classification, LyapunovSumAtTheCircle) {
  const NormalFormParams nf = plain_normal_form(0.04);
  const AttractorClass c = classify_attractor(nf, {0.5, 0.0, 0.1}, 100000);
  const double expected = std::log(std::fabs(1 + nf.mu - 3 * nf.a_mu * 0.04)) + std::log(std::fabs(nf.gamma));
  EXPECT_NEAR(c.lyapunov[0] + c.lyapunov[1] + c.lyapunov[2], expected, 1e-4);
}

TEST(Classification, NormalFormSink) {
  const AttractorClass c = classify_attractor(plain_normal_form(-0.01), {0.1, 0.0, 0.1}, 100000);
  EXPECT_EQ(c.kind, AttractorKind::Sink);
  EXPECT_LT(c.lyapunov[0], -1e-3);
}

TEST(Classification, HenonStrangeAttractor) {
  const AttractorClass c = classify_attractor(HenonParams{-1.4, 0.3}, {0, 0, 0}, 100000);
  EXPECT_EQ(c.kind, AttractorKind::StrangeAttractor);
  EXPECT_GT(c.lyapunov[0], 1e-2);
  EXPECT_TRUE(std::isfinite(c.evidence.max_norm));
}

TEST(Classification, SameBasinSameClass) {
  const AttractorClass a = classify_attractor(HenonParams{-1.4, 0.3}, {0, 0, 0}, 50000);
  const AttractorClass b = classify_attractor(HenonParams{-1.4, 0.3}, {0.1, 0.03, 0.1}, 50000);
  EXPECT_EQ(a.kind, b.kind);
  const AttractorClass c = classify_attractor(plain_normal_form(0.04), {0.05, 1.0, -0.3}, 50000);
  EXPECT_EQ(c.kind, AttractorKind::InvariantCircle);
}

TEST(Classification, DivergingHenonEscapes) {
  const AttractorClass c = classify_attractor(HenonParams{2.0, 0.3}, {0, 0, 0}, 10000);
  EXPECT_EQ(c.kind, AttractorKind::Escaped);
  EXPECT_GT(c.evidence.escaped_at, 0);
}

TEST(Classification, TooFewSteps) {
  EXPECT_EQ(code_of([] { classify_attractor(HenonParams{}, {0, 0, 0}, 9999); }), errc::InsufficientSamples);
}

TEST(TangencyScan, EventsAreBracketedNarrowly) {
  TangencyScanConfig cfg;
  cfg.delta_from = 1.95;
  cfg.delta_to = 2.05;
  cfg.grid = 3;
  const TangencyScanResult r = tangency_scan(BifocusParams{}, GlobalMapModel{}, SlabConfig{}, fixed_word(1), fixed_word(2), cfg);
  EXPECT_FALSE(r.homoclinic);
  ASSERT_EQ(r.samples.size(), 3u);
  ASSERT_FALSE(r.events.empty());
  for (const auto& e : r.events) {
    EXPECT_LE(e.delta_hi - e.delta_lo, 1e-3);
    EXPECT_NE(e.count_lo, e.count_hi);
    EXPECT_GE(e.delta_lo, cfg.delta_from);
    EXPECT_LE(e.delta_hi, cfg.delta_to);
    EXPECT_FALSE(e.homoclinic);
  }
}

TEST(TangencyScan, SameOrbitEventsAreHomoclinic) {
  TangencyScanConfig cfg;
  cfg.delta_from = 1.5;
  cfg.delta_to = 1.55;
  cfg.grid = 2;
  const TangencyScanResult r = tangency_scan(BifocusParams{}, GlobalMapModel{}, SlabConfig{}, fixed_word(1), fixed_word(1), cfg);
  EXPECT_TRUE(r.homoclinic);
  ASSERT_FALSE(r.events.empty());
  for (const auto& e : r.events) EXPECT_TRUE(e.homoclinic);
}

TEST(TangencyScan, LosingTheOrbitReportsTheLastGoodDelta) {
  TangencyScanConfig cfg;
  cfg.delta_from = 1.5;
  cfg.delta_to = 0.9;
  cfg.grid = 7;
  cfg.resolution = 100;
  try {
    tangency_scan(BifocusParams{}, GlobalMapModel{}, SlabConfig{}, fixed_word(1), fixed_word(2), cfg);
    FAIL() << "scan should not continue below the admissible range";
  } catch (const continuation_lost& e) {
    EXPECT_EQ(e.code(), errc::ContinuationLost);
    ASSERT_TRUE(e.last_good_delta.has_value());
    EXPECT_NEAR(*e.last_good_delta, 1.4, 1e-12);
  }
}
