#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace tate;

TEST(TiltBinary, IdentityAtZero) {
  for (double rho : {0.0, 0.1, 0.37, 0.5, 0.99, 1.0}) EXPECT_EQ(tilt_binary(rho, 0.0), rho);
}

TEST(TiltBinary, FixedPoints) {
  for (double g : {-50.0, -1.0, -0.05, 0.05, 1.0, 50.0, 800.0}) {
    EXPECT_EQ(tilt_binary(0.0, g), 0.0);
    EXPECT_EQ(tilt_binary(1.0, g), 1.0);
  }
}

TEST(TiltBinary, HalfAtLogTwo) { EXPECT_NEAR(tilt_binary(0.5, std::log(2.0)), 2.0 / 3.0, 1e-15); }

TEST(TiltBinary, NoOverflowAtLargeGamma) {
  EXPECT_NEAR(tilt_binary(0.3, 1000.0), 1.0, 1e-15);
  EXPECT_NEAR(tilt_binary(0.3, -1000.0), 0.0, 1e-15);
  EXPECT_TRUE(std::isfinite(tilt_slope(0.3, 1000.0)));
}

TEST(TiltBinary, OddsMultiplyByExpGamma) {
  const double rho = 0.4;
  const double t = tilt_binary(rho, 0.05);
  EXPECT_NEAR((t / (1 - t)) / (rho / (1 - rho)), std::exp(0.05), 1e-14);
}

TEST(TiltSlope, MatchesFiniteDifference) {
  for (double g : {-0.7, 0.0, 0.05, 2.0}) {
    for (double rho : {0.1, 0.5, 0.8}) {
      const double h = 1e-6;
      const double fd = (tilt_binary(rho + h, g) - tilt_binary(rho - h, g)) / (2 * h);
      EXPECT_NEAR(tilt_slope(rho, g), fd, 1e-8);
    }
  }
}

TEST(ThetaOr, ConstantRhoAtLogTwo) {
  const auto t = testing_support::full_support_table();
  SharedOutcomeModel rho;
  rho.by_v = {0.5, 0.5};
  EXPECT_NEAR(theta_or_binary(rho, t, std::log(2.0)), 2.0 / 3.0, 1e-15);
}

TEST(ThetaOr, GammaZeroIsTargetMean) {
  const auto t = testing_support::full_support_table(3, 5);  // 5 F, 6 M target rows
  SharedOutcomeModel rho;
  rho.by_v = {0.2, 0.7};
  EXPECT_NEAR(theta_or_binary(rho, t, 0.0), (5 * 0.2 + 6 * 0.7) / 11.0, 1e-15);
}

TEST(EffectMeasures, Balanced) {
  const auto m = effect_measures(0.5, 0.5);
  EXPECT_EQ(m.difference, 0.0);
  EXPECT_EQ(*m.risk_ratio, 1.0);
  EXPECT_EQ(*m.odds_ratio, 1.0);
}

TEST(EffectMeasures, HandArithmetic) {
  const auto m = effect_measures(0.6, 0.3);
  EXPECT_NEAR(m.difference, 0.3, 1e-15);
  EXPECT_NEAR(*m.risk_ratio, 2.0, 1e-15);
  EXPECT_NEAR(*m.odds_ratio, 3.5, 1e-14);
}

TEST(EffectMeasures, UndefinedRatios) {
  const auto m = effect_measures(0.2, 0.0);
  EXPECT_FALSE(m.risk_ratio.has_value());
  EXPECT_FALSE(m.odds_ratio.has_value());
}

TEST(GammaGrid, DefaultHas51PointsPerAxisAndHitsZero) {
  const GammaGrid g;
  const auto v = g.gamma0.values();
  ASSERT_EQ(v.size(), 51u);
  EXPECT_EQ(v[25], 0.0);
  EXPECT_NEAR(v.front(), -0.05, 1e-15);
  EXPECT_NEAR(v.back(), 0.05, 1e-15);
  EXPECT_EQ(g.size(), 51u * 51u);
  EXPECT_NO_THROW(g.validate_contains_origin());
}

TEST(GammaGrid, RowMajorOrder) {
  const GammaGrid g{{-0.002, 0.002, 0.002}, {0.0, 0.004, 0.002}};
  const auto p = g.points();
  ASSERT_EQ(p.size(), 9u);
  EXPECT_EQ(p[1].gamma0, p[0].gamma0);
  EXPECT_GT(p[1].gamma1, p[0].gamma1);
  EXPECT_GT(p[3].gamma0, p[0].gamma0);
}

TEST(GammaGrid, Validation) {
  EXPECT_THROW((GammaGrid{{0.0, 0.01, 0.0}, {0.0, 0.0, 1.0}}.validate()), ConfigError);
  EXPECT_THROW((GammaGrid{{0.01, 0.0, 0.001}, {0.0, 0.0, 1.0}}.validate()), ConfigError);
  EXPECT_THROW((GammaGrid{{0.0, 0.01, 0.003}, {0.0, 0.0, 1.0}}.validate()), ConfigError);
  EXPECT_THROW((GammaGrid{{0.01, 0.02, 0.01}, {0.0, 0.0, 1.0}}.validate_contains_origin()), ConfigError);
}

TEST(GammaGrid, JsonRoundTrip) {
  const GammaGrid g{{-0.01, 0.01, 0.002}, {-0.02, 0.02, 0.004}};
  const auto back = GammaGrid::from_json(g.to_json());
  EXPECT_EQ(back.to_json(), g.to_json());
  EXPECT_THROW(GammaGrid::from_json(nlohmann::json::parse(R"({"gamma0": [0, 1], "gamma1": [0, 0, 1]})")),
               ConfigError);
}

TEST(SensitivityPair, TiltMagnitude) {
  EXPECT_NEAR((SensitivityPair{-0.01, 0.01}.tilt_magnitude()), 1.020201340026756, 1e-15);
  EXPECT_EQ((SensitivityPair{0.03, 0.03}.tilt_magnitude()), 1.0);
}
