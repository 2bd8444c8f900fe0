#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"

using namespace tate;
using testing_support::make_table;
using testing_support::SourceRow;

namespace {

/// Treated outcomes {1, 0, 1, 1}, control outcomes {0, 0, 1, 0}.
ObservationTable small_trial() {
  std::vector<SourceRow> src;
  for (double y : {1.0, 0.0, 1.0, 1.0}) src.push_back({{0}, 1, y});
  for (double y : {0.0, 0.0, 1.0, 0.0}) src.push_back({{0}, 0, y});
  return make_table(testing_support::single_schema(), src, {{0}});
}

std::vector<std::size_t> source_rows(const ObservationTable& t) { return t.rows_with_role(Role::source); }

GridEstimate report_at(SensitivityPair g, double lo, double hi) {
  GridEstimate e;
  e.gamma = g;
  e.tate.gamma = g;
  e.tate.point = 0.5 * (lo + hi);
  e.tate.lo = lo;
  e.tate.hi = hi;
  return e;
}

/// 3 x 3 grid over {-0.01, 0, 0.01}; `sig[i]` is +1, -1 or 0 and `in_c[i]`
/// marks membership of the calibrated region.
std::pair<std::vector<GridEstimate>, CalibrationRegion> fixture(const std::vector<int>& sig,
                                                                const std::vector<bool>& in_c) {
  CalibrationRegion region;
  region.grid = GammaGrid{{-0.01, 0.01, 0.01}, {-0.01, 0.01, 0.01}};
  region.points = region.grid.points();
  region.c = in_c;
  std::vector<GridEstimate> reports;
  for (std::size_t i = 0; i < region.points.size(); ++i) {
    const double lo = sig[i] > 0 ? 0.01 : (sig[i] < 0 ? -0.05 : -0.02);
    const double hi = sig[i] > 0 ? 0.05 : (sig[i] < 0 ? -0.01 : 0.02);
    reports.push_back(report_at(region.points[i], lo, hi));
  }
  return {reports, region};
}

const std::vector<bool> kAll(9, true);

}  // namespace

TEST(StandardCi, DiffInMeansHand) {
  const auto t = small_trial();
  const auto rows = source_rows(t);
  const auto ci = standard_ci(t, rows, 0.05);
  EXPECT_DOUBLE_EQ(ci.estimate, 0.5);
  // Each arm: sample variance 1/4 over 4 rows.
  EXPECT_NEAR(ci.se, std::sqrt(0.125), 1e-15);
  EXPECT_NEAR(ci.lo, 0.5 - 1.959963984540054 * std::sqrt(0.125), 1e-12);
}

TEST(StandardCi, DegenerateOutcomeEqualsTreatment) {
  std::vector<SourceRow> src;
  for (int a = 0; a < 2; ++a) {
    for (int k = 0; k < 3; ++k) src.push_back({{0}, a, static_cast<double>(a)});
  }
  const auto t = make_table(testing_support::single_schema(), src, {{0}});
  const auto ci = standard_ci(t, source_rows(t), 0.05);
  EXPECT_EQ(ci.estimate, 1.0);
  EXPECT_EQ(ci.se, 0.0);
  EXPECT_EQ(ci.lo, 1.0);
  EXPECT_EQ(ci.hi, 1.0);
}

TEST(StandardCi, RegressionWithBalancedCovariateMatchesDiffInMeans) {
  // The small trial repeated in both levels of g: g is orthogonal to A.
  std::vector<SourceRow> src;
  for (std::int16_t g = 0; g < 2; ++g) {
    for (double y : {1.0, 0.0, 1.0, 1.0}) src.push_back({{g}, 1, y});
    for (double y : {0.0, 0.0, 1.0, 0.0}) src.push_back({{g}, 0, y});
  }
  const auto t = make_table(testing_support::single_schema(), src, {{0}});
  StandardCiOptions o;
  o.method = StandardCiMethod::wls_covariates;
  o.inverse_propensity = false;
  const auto ci = standard_ci(t, source_rows(t), 0.05, o);
  EXPECT_NEAR(ci.estimate, 0.5, 1e-14);
  // RSS 3 on 13 df; (X'X)^-1 for the treatment column is 1 / (16 * 1/4).
  EXPECT_NEAR(ci.se, std::sqrt(3.0 / 13.0 * 0.25), 1e-14);
  o.inverse_propensity = true;
  EXPECT_NEAR(standard_ci(t, source_rows(t), 0.05, o).estimate, 0.5, 1e-14);
}

TEST(StandardCi, RegressionAdjustsForCovariate) {
  const auto t = testing_support::full_support_table(4);
  StandardCiOptions o;
  o.method = StandardCiMethod::wls_covariates;
  const auto ci = standard_ci(t, source_rows(t), 0.05, o);
  EXPECT_TRUE(std::isfinite(ci.estimate));
  EXPECT_GT(ci.se, 0.0);
  o.covariates = {"nope"};
  EXPECT_THROW(standard_ci(t, source_rows(t), 0.05, o), ConfigError);
}

TEST(StandardCi, Errors) {
  std::vector<SourceRow> src;
  for (int k = 0; k < 3; ++k) src.push_back({{0}, 1, 1.0});
  src.push_back({{0}, 0, 1.0});
  const auto t = make_table(testing_support::single_schema(), src, {{0}});
  const std::vector<std::size_t> treated{0, 1, 2};
  EXPECT_THROW(standard_ci(t, treated, 0.05), EstimationError);
  EXPECT_THROW(standard_ci(t, source_rows(t), 0.05), EstimationError);  // one control row
  const std::vector<std::size_t> with_target{0, 4};
  EXPECT_THROW(standard_ci(t, with_target, 0.05), ConfigError);
}

TEST(Rescale, FactorsAndWidths) {
  EXPECT_EQ(rescale_factor(100, 100), 1.0);
  EXPECT_EQ(rescale_factor(25, 100), 0.5);
  const auto r = rescale(0.1, {0.0, 0.3}, 0.5);
  EXPECT_NEAR(r.lo, 0.05, 1e-15);
  EXPECT_NEAR(r.hi, 0.2, 1e-15);
  const auto same = rescale(0.1, {0.0, 0.3}, 1.0);
  EXPECT_EQ(same.lo, 0.0);
  EXPECT_EQ(same.hi, 0.3);
  EXPECT_THROW(rescale_factor(1, 0), ConfigError);
}

TEST(Overlap, ClosedIntervals) {
  const std::vector<Interval> ts{{0.0, 1.0}, {1.0, 2.0}, {1.5, 2.0}, {-1.0, -0.1}};
  const auto m = overlap_region(ts, {0.5, 1.0});
  EXPECT_EQ(m, (std::vector<bool>{true, true, false, false}));
}

TEST(Partition, SplitsAndErrors) {
  const auto t = testing_support::full_support_table();
  const auto p = partition_source(t, {"age", {"young"}});
  EXPECT_EQ(p.s1.size() + p.s2.size(), t.n_source());
  for (std::size_t r : p.s1) EXPECT_EQ(t.covariate(1, r), 0);
  EXPECT_THROW(partition_source(t, {"age", {"young", "old"}}), ConfigError);
  EXPECT_THROW(partition_source(t, {"age", {"ancient"}}), ConfigError);
  EXPECT_THROW(partition_source(t, {"height", {"tall"}}), ConfigError);
  EXPECT_THROW(partition_source(t, {"age", {}}), ConfigError);
}

TEST(Subsample, SizeOrderAndDeterminism) {
  std::vector<std::size_t> rows(50);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = 100 + 2 * i;
  auto e1 = rng::engine(3, rng::Stream::calibration);
  auto e2 = rng::engine(3, rng::Stream::calibration);
  const auto a = subsample(rows, 20, e1);
  const auto b = subsample(rows, 20, e2);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 20u);
  EXPECT_TRUE(std::is_sorted(a.begin(), a.end()));
  EXPECT_EQ(std::adjacent_find(a.begin(), a.end()), a.end());
}

TEST(RatioMatch, PreservesSourceTargetRatio) {
  std::vector<std::size_t> s(300);
  std::vector<std::size_t> t(100);
  std::iota(s.begin(), s.end(), std::size_t{0});
  std::iota(t.begin(), t.end(), std::size_t{1000});
  auto eng = rng::engine(1, rng::Stream::calibration);
  const auto [s1, t1] = detail::ratio_match(s, t, 2.0, eng);
  EXPECT_EQ(s1.size(), 200u);
  EXPECT_EQ(t1.size(), 100u);
  const auto [s2, t2] = detail::ratio_match(s, t, 6.0, eng);
  EXPECT_EQ(s2.size(), 300u);
  EXPECT_EQ(t2.size(), 50u);
  EXPECT_THROW(detail::ratio_match(s, t, 1e-4, eng), ConfigError);
}

class CalibrateSim : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    table_ = new ObservationTable(sim::generate(sim::builtin_dgp(sim::Scenario::A), 20000, 10000, 41));
  }
  static void TearDownTestSuite() {
    delete table_;
    table_ = nullptr;
  }
  static CalibrationOptions options() {
    CalibrationOptions o;
    o.estimator.bootstrap.B = 200;
    return o;
  }
  static inline ObservationTable* table_ = nullptr;
  const GammaGrid grid_{{-0.2, 0.2, 0.1}, {-0.2, 0.2, 0.1}};
};

TEST_F(CalibrateSim, RegionIsIntersection) {
  const auto r = calibrate(*table_, {"race", {"Black"}}, grid_, options(), 5);
  ASSERT_EQ(r.size(), grid_.size());
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r.c[i], r.c1[i] && r.c2[i]);
  // n_s / n_t = 2 in each direction.
  EXPECT_NEAR(static_cast<double>(r.forward.proxy_source) / static_cast<double>(r.forward.proxy_target), 2.0, 1e-3);
  EXPECT_NEAR(static_cast<double>(r.backward.proxy_source) / static_cast<double>(r.backward.proxy_target), 2.0,
              1e-3);
  EXPECT_NEAR(r.forward.factor, std::sqrt(static_cast<double>(r.forward.proxy_target) / 10000.0), 1e-15);
}

TEST_F(CalibrateSim, SymmetricUnderRelabeling) {
  const auto a = calibrate(*table_, {"race", {"Black"}}, grid_, options(), 5);
  const auto b = calibrate(*table_, {"race", {"Latinx", "Other"}}, grid_, options(), 5);
  EXPECT_EQ(a.c1, b.c2);
  EXPECT_EQ(a.c2, b.c1);
  EXPECT_EQ(a.c, b.c);
  EXPECT_EQ(a.forward.standard.estimate, b.backward.standard.estimate);
}

TEST_F(CalibrateSim, DeterministicAndEifRuns) {
  auto o = options();
  const auto a = calibrate(*table_, {"age", {"18-24"}}, grid_, o, 9);
  const auto b = calibrate(*table_, {"age", {"18-24"}}, grid_, o, 9);
  EXPECT_EQ(a.c, b.c);
  o.estimator.method = InferenceMethod::eif_wald;
  const auto e = calibrate(*table_, {"age", {"18-24"}}, grid_, o, 9);
  EXPECT_EQ(e.size(), grid_.size());
}

TEST_F(CalibrateSim, FullPartitionStandardCi) {
  auto o = options();
  o.standard_on_full_partition = true;
  const auto r = calibrate(*table_, {"race", {"Black"}}, grid_, o, 5);
  const auto part = partition_source(*table_, {"race", {"Black"}});
  const auto direct = standard_ci(*table_, part.s2, 0.05);
  EXPECT_EQ(r.forward.standard.estimate, direct.estimate);
}

TEST(Classify, NegativeOnlyAtZeroTilt) {
  // Significant negative along the diagonal.
  const auto [reports, region] = fixture({-1, 0, 0, 0, -1, 0, 0, 0, -1}, kAll);
  const auto v = classify(reports, region);
  EXPECT_EQ(v.direction, Direction::negative_only);
  EXPECT_DOUBLE_EQ(*v.min_tilt, 1.0);
  EXPECT_FALSE(v.empty_region);
  EXPECT_EQ(std::string(to_string(v.direction)), "Negative Only");
}

TEST(Classify, PositiveOnlyNeedsLargestTilt) {
  // Only (gamma0, gamma1) = (-0.01, 0.01) is significant.
  const auto [reports, region] = fixture({0, 0, 1, 0, 0, 0, 0, 0, 0}, kAll);
  const auto v = classify(reports, region);
  EXPECT_EQ(v.direction, Direction::positive_only);
  EXPECT_NEAR(*v.min_tilt, 1.020201340026756, 1e-12);
  EXPECT_NEAR(v.min_tilt_at->gamma1, 0.01, 1e-15);
}

TEST(Classify, SignificanceOutsideRegionIgnored) {
  std::vector<bool> c(9, true);
  c[2] = false;
  const auto [reports, region] = fixture({0, 0, 1, 0, 0, 0, 0, 0, 0}, c);
  const auto v = classify(reports, region);
  EXPECT_EQ(v.direction, Direction::neither);
  EXPECT_FALSE(v.min_tilt.has_value());
  EXPECT_EQ(std::string(to_string(v.direction)), "Neither Direction");
  EXPECT_TRUE(v.to_json().at("min_tilt").is_null());
}

TEST(Classify, BothDirections) {
  const auto [reports, region] = fixture({-1, 0, 0, 0, 0, 0, 1, 0, 0}, kAll);
  const auto v = classify(reports, region);
  EXPECT_EQ(v.direction, Direction::both_directions);
  EXPECT_DOUBLE_EQ(*v.min_tilt, 1.0);
  EXPECT_EQ(std::string(to_string(v.direction)), "Both Directions");
}

TEST(Classify, EmptyRegion) {
  const auto [reports, region] = fixture({1, 1, 1, 1, 1, 1, 1, 1, 1}, std::vector<bool>(9, false));
  const auto v = classify(reports, region);
  EXPECT_TRUE(v.empty_region);
  EXPECT_EQ(v.direction, Direction::neither);
  EXPECT_TRUE(v.to_json().at("empty_region").get<bool>());
}

TEST(Classify, GridMismatch) {
  auto [reports, region] = fixture({0, 0, 0, 0, 0, 0, 0, 0, 0}, kAll);
  reports.pop_back();
  EXPECT_THROW(classify(reports, region), ConfigError);
}

TEST(Classify, ClosedBoundaryIsNotSignificant) {
  auto [reports, region] = fixture({0, 0, 0, 0, 0, 0, 0, 0, 0}, kAll);
  reports[4].tate.lo = 0.0;
  reports[4].tate.hi = 0.1;
  EXPECT_EQ(classify(reports, region).direction, Direction::neither);
}
