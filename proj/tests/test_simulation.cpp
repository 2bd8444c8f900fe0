#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace tate;

TEST(BuiltinDgp, TranscribedRow) {
  const auto a = sim::builtin_dgp(sim::Scenario::A);
  const auto b = sim::builtin_dgp(sim::Scenario::B);
  ASSERT_EQ(a.strata.size(), 18u);
  // (Female, Other, Other).
  const auto& r = a.strata[8];
  EXPECT_EQ(r.codes, (std::array<std::int16_t, 3>{0, 2, 2}));
  EXPECT_EQ(r.pi, 0.9);
  EXPECT_EQ(r.mu0, 0.6);
  EXPECT_EQ(r.mu1, 0.55);
  EXPECT_NEAR(r.p_source * (1.0 - a.source_residual), 0.2016, 1e-15);
  EXPECT_NEAR(r.p_target * (1.0 - a.target_residual), 0.2218, 1e-15);
  EXPECT_EQ(b.strata[8].mu0, 0.3);
  EXPECT_EQ(b.strata[8].mu1, 0.5);
  // Control mean printed as 7, read as 0.7.
  EXPECT_EQ(b.strata[15].mu0, 0.7);
  EXPECT_TRUE(b.transcription_corrected);
  EXPECT_FALSE(a.transcription_corrected);
}

TEST(BuiltinDgp, ResidualsAndNormalization) {
  const auto d = sim::builtin_dgp(sim::Scenario::A);
  EXPECT_NEAR(d.target_residual, -0.0563, 1e-12);
  EXPECT_NEAR(d.source_residual, 0.0, 1e-12);
  double ps = 0.0;
  double pt = 0.0;
  for (const auto& s : d.strata) {
    ps += s.p_source;
    pt += s.p_target;
    const double ratio = s.p_target / s.p_source;
    EXPECT_GT(ratio, 0.85);
    EXPECT_LT(ratio, 1.15);
  }
  EXPECT_NEAR(ps, 1.0, 1e-12);
  EXPECT_NEAR(pt, 1.0, 1e-12);
}

TEST(BuiltinDgp, ScenarioParsing) {
  EXPECT_EQ(sim::scenario_from_string("A"), sim::Scenario::A);
  EXPECT_EQ(sim::scenario_from_string("b"), sim::Scenario::B);
  EXPECT_THROW(sim::scenario_from_string("C"), ConfigError);
}

TEST(Generate, SizesAndLargeSampleFrequencies) {
  const auto d = sim::builtin_dgp(sim::Scenario::A);
  const std::size_t n = 200000;
  const auto t = sim::generate(d, n, n / 2, 3);
  EXPECT_EQ(t.n_source(), n);
  EXPECT_EQ(t.n_target(), n / 2);
  std::vector<double> count(t.layout().x_count(), 0.0);
  std::vector<double> treated(t.layout().x_count(), 0.0);
  double female_target = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.is_source(i)) {
      count[static_cast<std::size_t>(t.x_stratum(i))] += 1.0;
      treated[static_cast<std::size_t>(t.x_stratum(i))] += t.treatment(i);
    } else {
      female_target += t.covariate(0, i) == 0 ? 1.0 : 0.0;
      EXPECT_EQ(t.covariate(1, i), ObservationTable::kMissing);
    }
  }
  double female_p = 0.0;
  for (const auto& s : d.strata) {
    const auto x = static_cast<std::size_t>(t.layout().x_code(s.codes));
    EXPECT_NEAR(count[x] / static_cast<double>(n), s.p_source, 0.01);
    EXPECT_NEAR(treated[x] / count[x], s.pi, 0.02 + 4.0 / std::sqrt(count[x]));
    if (s.codes[0] == 0) female_p += s.p_target;
  }
  EXPECT_NEAR(female_target / static_cast<double>(n / 2), female_p, 0.01);
}

TEST(Generate, Deterministic) {
  const auto d = sim::builtin_dgp(sim::Scenario::B);
  EXPECT_EQ(to_csv(sim::generate(d, 500, 300, 9)), to_csv(sim::generate(d, 500, 300, 9)));
  EXPECT_NE(to_csv(sim::generate(d, 500, 300, 9)), to_csv(sim::generate(d, 500, 300, 10)));
  EXPECT_THROW(sim::generate(d, 0, 1, 1), ConfigError);
}

TEST(TrueTheta, FrozenOracleValues) {
  const auto a = sim::builtin_dgp(sim::Scenario::A);
  const auto b = sim::builtin_dgp(sim::Scenario::B);
  const auto a0 = sim::true_theta(a, {0.0, 0.0});
  EXPECT_NEAR(a0.theta1, 0.486356776058316, 1e-14);
  EXPECT_NEAR(a0.theta0, 0.485367473776767, 1e-14);
  EXPECT_NEAR(a0.tate, 9.893022815487540e-04, 1e-14);
  const auto a5 = sim::true_theta(a, {0.0, 0.05});
  EXPECT_NEAR(a5.theta1, 0.498832822742725, 1e-14);
  EXPECT_NEAR(a5.tate, 1.346534896595714e-02, 1e-14);
  const auto b0 = sim::true_theta(b, {0.0, 0.0});
  EXPECT_NEAR(b0.theta1, 0.397086836644028, 1e-14);
  EXPECT_NEAR(b0.theta0, 0.428574753308834, 1e-14);
  EXPECT_NEAR(b0.tate, -3.148791666480560e-02, 1e-14);
  EXPECT_NEAR(sim::true_theta(b, {0.0, 0.05}).tate, -1.945812928946955e-02, 1e-14);
}

TEST(TrueTheta, MonotoneInGamma) {
  const auto a = sim::builtin_dgp(sim::Scenario::A);
  double last = -1.0;
  for (double g = -1.0; g <= 1.0; g += 0.1) {
    const double v = sim::true_theta(a, {0.0, g}).tate;
    EXPECT_GT(v, last);
    last = v;
  }
}

namespace {

sim::DgpSpec degenerate_dgp() {
  auto d = sim::builtin_dgp(sim::Scenario::A);
  for (auto& s : d.strata) {
    s.mu0 = 0.0;
    s.mu1 = 0.0;
  }
  return d;
}

sim::StudyConfig small_config() {
  sim::StudyConfig c;
  c.n = 20000;
  c.replicates = 6;
  c.B = 40;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(RunStudy, DegenerateOutcomeHasNoError) {
  const auto reports = sim::run_study(degenerate_dgp(), small_config());
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) {
    EXPECT_EQ(r.truth, 0.0);
    EXPECT_EQ(r.bias, 0.0);
    EXPECT_EQ(r.emp_sd, 0.0);
    EXPECT_EQ(r.rmse, 0.0);
    EXPECT_EQ(r.rate, 1.0);
    EXPECT_EQ(r.replicates, 6u);
    EXPECT_EQ(r.failed, 0u);
  }
}

TEST(RunStudy, RmseIdentityAndCellOrder) {
  const auto reports = sim::run_study(sim::builtin_dgp(sim::Scenario::A), small_config());
  ASSERT_EQ(reports.size(), 4u);
  EXPECT_EQ(reports[0].estimator, InferenceMethod::or_bootstrap);
  EXPECT_EQ(reports[1].gamma1, 0.05);
  EXPECT_EQ(reports[2].estimator, InferenceMethod::eif_wald);
  for (const auto& r : reports) {
    const double R = static_cast<double>(r.replicates);
    EXPECT_NEAR(r.rmse * r.rmse, r.bias * r.bias + r.emp_sd * r.emp_sd * (R - 1.0) / R, 1e-15);
  }
  // Both gamma1 cells of an estimator share datasets: at gamma0 = 0 the
  // theta0 part is common, so the estimates move together.
  EXPECT_GT(reports[1].estimates[0] - reports[0].estimates[0], 0.0);
}

TEST(RunStudy, DeterministicAndThreadInvariant) {
  auto c = small_config();
  c.estimators = {InferenceMethod::eif_wald};
  const auto a = sim::run_study(sim::builtin_dgp(sim::Scenario::B), c);
  c.threads = 3;
  const auto b = sim::run_study(sim::builtin_dgp(sim::Scenario::B), c);
  EXPECT_EQ(sim::to_csv(a), sim::to_csv(b));
}

TEST(Summarize, HandValues) {
  sim::ReplicationReport r;
  r.truth = 1.0;
  r.estimates = {1.0, 2.0, 3.0};
  r.standard_errors = {0.5, 0.5, 1.1};
  r.covered = {true, false, true};
  sim::summarize(r);
  EXPECT_DOUBLE_EQ(r.bias, 1.0);
  EXPECT_DOUBLE_EQ(r.emp_sd, 1.0);
  EXPECT_DOUBLE_EQ(r.rmse, std::sqrt(5.0 / 3.0));
  EXPECT_DOUBLE_EQ(r.est_se, 0.7);
  EXPECT_DOUBLE_EQ(r.rate, 2.0 / 3.0);
}

TEST(StudyConfig, JsonRoundTripAndSeedRequired) {
  const auto j = nlohmann::json::parse(R"({"scenario": "B", "estimator": "eif", "n": 500, "gamma1": 0.05,
                                            "replicates": 10, "seed": 3})");
  const auto c = sim::StudyConfig::from_json(j);
  EXPECT_EQ(c.scenario, sim::Scenario::B);
  ASSERT_EQ(c.estimators.size(), 1u);
  EXPECT_EQ(c.gamma1, std::vector<double>{0.05});
  EXPECT_EQ(sim::StudyConfig::from_json(c.to_json()).to_json(), c.to_json());
  EXPECT_THROW(sim::StudyConfig::from_json(nlohmann::json::parse(R"({"n": 10})")), ConfigError);
  EXPECT_THROW(sim::StudyConfig::from_json(nlohmann::json::parse(R"({"seed": 1, "estimator": "ipw"})")),
               ConfigError);
}

TEST(StudyCsv, Columns) {
  sim::ReplicationReport r;
  r.truth = 0.0;
  r.estimates = {0.001, -0.001};
  r.standard_errors = {0.1, 0.1};
  r.covered = {true, true};
  sim::summarize(r);
  const std::vector<sim::ReplicationReport> v{r};
  const auto csv = sim::to_csv(v);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "scenario,estimator,n,gamma0,gamma1,truth,bias_x1000,rmse_x1000,emp_sd_x1000,est_se_x1000,rate,"
            "replicates,failed,seed");
  EXPECT_NE(csv.find("A,OR,"), std::string::npos);
}
