#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tate/data_model.hpp"
#include "tate/eif_estimator.hpp"
#include "tate/errors.hpp"
#include "tate/or_estimator.hpp"
#include "tate/parallel.hpp"
#include "tate/report.hpp"
#include "tate/rng.hpp"
#include "tate/tilt.hpp"

namespace tate::sim {

enum class Scenario { A, B };

inline const char* to_string(Scenario s) { return s == Scenario::A ? "A" : "B"; }

inline Scenario scenario_from_string(const std::string& s) {
  if (s == "A" || s == "a") return Scenario::A;
  if (s == "B" || s == "b") return Scenario::B;
  throw ConfigError("simulation: unknown scenario '" + s + "' (expected A or B)");
}

struct DgpStratum {
  std::array<std::int16_t, 3> codes;  // gender, race, age
  double p_source;
  double p_target;
  double pi;
  double mu0;
  double mu1;
};

struct DgpSpec {
  Scenario scenario = Scenario::A;
  std::vector<DgpStratum> strata;
  /// 1 - sum of the printed column, before renormalization.
  double source_residual = 0.0;
  double target_residual = 0.0;
  /// Set when a printed cell was corrected during transcription.
  bool transcription_corrected = false;

  void validate() const {
    double ps = 0.0;
    double pt = 0.0;
    for (const auto& s : strata) {
      if (!(s.pi > 0.0 && s.pi < 1.0)) throw ConfigError("dgp: propensity outside (0, 1)");
      for (double m : {s.mu0, s.mu1}) {
        if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("dgp: outcome mean outside [0, 1]");
      }
      if (s.p_source < 0.0 || s.p_target < 0.0) throw ConfigError("dgp: negative probability");
      ps += s.p_source;
      pt += s.p_target;
    }
    if (std::fabs(ps - 1.0) > 1e-9 || std::fabs(pt - 1.0) > 1e-9) {
      throw ConfigError("dgp: stratum probabilities must sum to 1");
    }
  }
};

inline CovariateSchema simulation_schema() {
  CovariateSchema s;
  s.covariates = {{"gender", {"Female", "Other"}}, {"race", {"Black", "Latinx", "Other"}}, {"age", {"18-24", "25-34", "Other"}}};
  s.shared = {"gender"};
  return s;
}

/// The 18-stratum design over gender x race x age group. The printed
/// target-probability column sums to 1.0563; both columns are renormalized
/// and the residuals kept. The Scenario B control mean printed as 7 for
/// (Other, Other, 18-24) is read as 0.7.
inline DgpSpec builtin_dgp(Scenario scenario) {
  struct Row {
    int g, r, a;
    double p1, p0, pi, a_mu0, a_mu1, b_mu0, b_mu1;
  };
  static constexpr Row rows[] = {
      {0, 0, 0, .0061, .0055, .6, .4, .35, .2, .6},   {0, 0, 1, .0077, .0071, .7, .4, .35, .2, .6},
      {0, 0, 2, .0157, .0150, .8, .5, .45, .7, .2},   {0, 1, 0, .0073, .0066, .6, .5, .45, .7, .2},
      {0, 1, 1, .0089, .0083, .8, .4, .35, .3, .3},   {0, 1, 2, .0147, .0139, .9, .5, .45, .7, .2},
      {0, 2, 0, .1001, .1042, .6, .6, .55, .3, .5},   {0, 2, 1, .1271, .1353, .8, .5, .45, .6, .2},
      {0, 2, 2, .2016, .2218, .9, .6, .55, .3, .5},   {1, 0, 0, .0197, .0193, .6, .3, .35, .2, .6},
      {1, 0, 1, .0280, .0285, .8, .2, .25, .2, .6},   {1, 0, 2, .0397, .0409, .8, .3, .35, .2, .6},
      {1, 1, 0, .0174, .0169, .6, .3, .35, .25, .55}, {1, 1, 1, .0201, .0200, .8, .3, .35, .25, .55},
      {1, 1, 2, .0211, .0212, .9, .4, .45, .25, .55}, {1, 2, 0, .1061, .1118, .7, .5, .55, .7, .2},
      {1, 2, 1, .1277, .1375, .8, .4, .45, .25, .55}, {1, 2, 2, .1310, .1425, .9, .5, .55, .7, .2},
  };
  DgpSpec d;
  d.scenario = scenario;
  d.transcription_corrected = scenario == Scenario::B;
  double ps = 0.0;
  double pt = 0.0;
  for (const auto& r : rows) {
    ps += r.p1;
    pt += r.p0;
  }
  d.source_residual = 1.0 - ps;
  d.target_residual = 1.0 - pt;
  for (const auto& r : rows) {
    const bool a = scenario == Scenario::A;
    d.strata.push_back({{static_cast<std::int16_t>(r.g), static_cast<std::int16_t>(r.r), static_cast<std::int16_t>(r.a)},
                        r.p1 / ps,
                        r.p0 / pt,
                        r.pi,
                        a ? r.a_mu0 : r.b_mu0,
                        a ? r.a_mu1 : r.b_mu1});
  }
  d.validate();
  return d;
}

namespace detail {

/// Multinomial counts by sequential binomials.
inline std::vector<long long> multinomial(long long n, std::span<const double> p, rng::Engine& eng) {
  std::vector<long long> out(p.size(), 0);
  double mass = 0.0;
  for (double x : p) mass += x;
  for (std::size_t i = 0; i < p.size() && n > 0; ++i) {
    const double q = mass > 0.0 ? std::min(1.0, p[i] / mass) : 1.0;
    long long k = n;
    if (q < 1.0) k = std::binomial_distribution<long long>(n, q)(eng);
    out[i] = k;
    n -= k;
    mass -= p[i];
  }
  return out;
}

inline long long binomial(long long n, double p, rng::Engine& eng) {
  return n == 0 ? 0 : std::binomial_distribution<long long>(n, p)(eng);
}

}  // namespace detail

/// Source: X from the source column, A | X ~ Bernoulli(pi), Y | A, X ~
/// Bernoulli(mu_A). Target: gender only, from the target column's marginal.
/// Rows come grouped by cell; nothing downstream depends on row order.
inline ObservationTable generate(const DgpSpec& dgp, std::size_t n_s, std::size_t n_t, std::uint64_t seed) {
  if (n_s < 1 || n_t < 1) throw ConfigError("generate: n_s and n_t must be at least 1");
  auto eng = rng::engine(seed, rng::Stream::simulation);
  ObservationTable::Builder b(simulation_schema());
  b.reserve(n_s + n_t);
  const std::span<const std::int16_t> no_meta;

  std::vector<double> ps;
  for (const auto& s : dgp.strata) ps.push_back(s.p_source);
  const auto counts = detail::multinomial(static_cast<long long>(n_s), ps, eng);
  for (std::size_t x = 0; x < dgp.strata.size(); ++x) {
    const auto& s = dgp.strata[x];
    const long long treated = detail::binomial(counts[x], s.pi, eng);
    const long long control = counts[x] - treated;
    const long long y1 = detail::binomial(treated, s.mu1, eng);
    const long long y0 = detail::binomial(control, s.mu0, eng);
    auto emit = [&](long long k, int a, double y) {
      for (long long i = 0; i < k; ++i) b.add_row(Role::source, s.codes, no_meta, a, y);
    };
    emit(y1, 1, 1.0);
    emit(treated - y1, 1, 0.0);
    emit(y0, 0, 1.0);
    emit(control - y0, 0, 0.0);
  }

  double female = 0.0;
  for (const auto& s : dgp.strata) {
    if (s.codes[0] == 0) female += s.p_target;
  }
  const long long n_female = detail::binomial(static_cast<long long>(n_t), female, eng);
  const std::int16_t v_only[2][3] = {{0, ObservationTable::kMissing, ObservationTable::kMissing},
                                     {1, ObservationTable::kMissing, ObservationTable::kMissing}};
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (long long i = 0; i < static_cast<long long>(n_t); ++i) {
    b.add_row(Role::target, v_only[i < n_female ? 0 : 1], no_meta, -1, nan);
  }
  return b.build();
}

struct TrueTheta {
  double theta1 = 0.0;
  double theta0 = 0.0;
  double tate = 0.0;
};

/// rho_a(v) = sum_{x in v} mu_a(x) p(x | S=1) / p(v | S=1);
/// theta_a = sum_v p(v | S=0) tilt(rho_a(v), gamma_a).
inline TrueTheta true_theta(const DgpSpec& dgp, SensitivityPair g) {
  double p_src[2] = {0.0, 0.0};
  double p_tgt[2] = {0.0, 0.0};
  double m[2][2] = {{0.0, 0.0}, {0.0, 0.0}};  // [arm][v]
  for (const auto& s : dgp.strata) {
    const auto v = static_cast<std::size_t>(s.codes[0]);
    p_src[v] += s.p_source;
    p_tgt[v] += s.p_target;
    m[0][v] += s.mu0 * s.p_source;
    m[1][v] += s.mu1 * s.p_source;
  }
  TrueTheta t;
  for (std::size_t v = 0; v < 2; ++v) {
    if (p_tgt[v] == 0.0) continue;
    t.theta1 += p_tgt[v] * tilt_binary(m[1][v] / p_src[v], g.gamma1);
    t.theta0 += p_tgt[v] * tilt_binary(m[0][v] / p_src[v], g.gamma0);
  }
  t.tate = t.theta1 - t.theta0;
  return t;
}

// ---------------------------------------------------------------------------
// Replication study

struct StudyConfig {
  Scenario scenario = Scenario::A;
  std::vector<InferenceMethod> estimators{InferenceMethod::or_bootstrap, InferenceMethod::eif_wald};
  std::size_t n = 100000;  // n_s = n_t = n
  std::vector<double> gamma1{0.0, 0.05};
  std::size_t replicates = 1000;
  double alpha = 0.05;
  std::size_t B = 1000;
  int K = 2;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  double max_failure_fraction = 0.01;
  OrOptions or_options;
  EifOptions eif_options;

  void validate() const {
    if (replicates < 2) throw ConfigError("simulation: replicates must be at least 2");
    if (n < 2) throw ConfigError("simulation: n must be at least 2");
    if (estimators.empty() || gamma1.empty()) throw ConfigError("simulation: nothing to run");
    validate_alpha(alpha);
  }

  static StudyConfig from_json(const nlohmann::json& j) {
    StudyConfig c;
    if (j.contains("scenario")) c.scenario = scenario_from_string(j.at("scenario").get<std::string>());
    if (j.contains("estimator")) {
      c.estimators.clear();
      auto parse = [](const std::string& s) {
        if (s == "or") return InferenceMethod::or_bootstrap;
        if (s == "eif") return InferenceMethod::eif_wald;
        throw ConfigError("simulation: unknown estimator '" + s + "' (expected or or eif)");
      };
      const auto& e = j.at("estimator");
      if (e.is_array()) {
        for (const auto& s : e) c.estimators.push_back(parse(s.get<std::string>()));
      } else {
        c.estimators.push_back(parse(e.get<std::string>()));
      }
    }
    if (j.contains("n")) c.n = j.at("n").get<std::size_t>();
    if (j.contains("gamma1")) {
      const auto& g = j.at("gamma1");
      c.gamma1 = g.is_array() ? g.get<std::vector<double>>() : std::vector<double>{g.get<double>()};
    }
    if (j.contains("replicates")) c.replicates = j.at("replicates").get<std::size_t>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("B")) c.B = j.at("B").get<std::size_t>();
    if (j.contains("K")) c.K = j.at("K").get<int>();
    if (!j.contains("seed")) throw ConfigError("simulation: seed is required");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json est = nlohmann::json::array();
    for (auto e : estimators) est.push_back(e == InferenceMethod::or_bootstrap ? "or" : "eif");
    return {{"scenario", to_string(scenario)}, {"estimator", est}, {"n", n},   {"gamma1", gamma1},
            {"replicates", replicates},         {"alpha", alpha},   {"B", B},   {"K", K},
            {"seed", seed}};
  }
};

struct ReplicationReport {
  InferenceMethod estimator = InferenceMethod::or_bootstrap;
  Scenario scenario = Scenario::A;
  std::size_t n = 0;
  double gamma1 = 0.0;
  double truth = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double emp_sd = 0.0;
  double est_se = 0.0;
  double rate = 0.0;
  std::size_t replicates = 0;  // successful
  std::size_t failed = 0;
  std::uint64_t seed = 0;
  std::vector<double> estimates;
  std::vector<double> standard_errors;
  std::vector<bool> covered;
};

/// Per-replicate outcome for one (estimator, gamma1) cell.
struct ReplicateDraw {
  double estimate = 0.0;
  double se = 0.0;
  bool covered = false;
};

/// Summary statistics. Emp.SD uses the R - 1 denominator, so
/// RMSE^2 = Bias^2 + Emp.SD^2 (R - 1) / R.
inline void summarize(ReplicationReport& r) {
  const auto R = static_cast<double>(r.estimates.size());
  if (R < 2) throw EstimationError("simulation: fewer than two successful replicates");
  double mean = 0.0;
  for (double e : r.estimates) mean += e;
  mean /= R;
  double ss = 0.0;
  double sq_err = 0.0;
  double se = 0.0;
  double hits = 0.0;
  for (std::size_t i = 0; i < r.estimates.size(); ++i) {
    ss += (r.estimates[i] - mean) * (r.estimates[i] - mean);
    sq_err += (r.estimates[i] - r.truth) * (r.estimates[i] - r.truth);
    se += r.standard_errors[i];
    hits += r.covered[i] ? 1.0 : 0.0;
  }
  r.bias = mean - r.truth;
  r.emp_sd = std::sqrt(ss / (R - 1.0));
  r.rmse = std::sqrt(sq_err / R);
  r.est_se = se / R;
  r.rate = hits / R;
  r.replicates = r.estimates.size();
}

namespace detail {

/// All (estimator, gamma1) cells of one replicate. Entry [e][j] is empty when
/// estimator e failed on this dataset.
inline std::vector<std::vector<std::optional<ReplicateDraw>>> run_replicate(const DgpSpec& dgp,
                                                                           const StudyConfig& c,
                                                                           std::span<const double> truth,
                                                                           std::uint64_t replicate_seed) {
  const auto table = generate(dgp, c.n, c.n, replicate_seed);
  std::vector<std::vector<std::optional<ReplicateDraw>>> out(c.estimators.size(),
                                                             std::vector<std::optional<ReplicateDraw>>(c.gamma1.size()));
  const double zero[] = {0.0};
  for (std::size_t e = 0; e < c.estimators.size(); ++e) {
    try {
      if (c.estimators[e] == InferenceMethod::or_bootstrap) {
        BootstrapOptions b;
        b.B = c.B;
        b.alpha = c.alpha;
        b.seed = replicate_seed;
        b.max_failure_fraction = c.max_failure_fraction;
        const auto fit = OrFit::fit(table, c.or_options);
        const auto surface = tate::detail::bootstrap_surface(table, zero, c.gamma1, b, c.or_options);
        const double p0 = fit.theta(0, 0.0);
        std::vector<double> values(surface.theta1.size());
        for (std::size_t j = 0; j < c.gamma1.size(); ++j) {
          for (std::size_t k = 0; k < values.size(); ++k) values[k] = surface.theta1[k][j] - surface.theta0[k][0];
          const auto r = tate::detail::percentile_report(Estimand::tate, {0.0, c.gamma1[j]},
                                                         fit.theta(1, c.gamma1[j]) - p0, values, b, surface.failed);
          out[e][j] = ReplicateDraw{r.point, r.standard_error(), r.lo <= truth[j] && truth[j] <= r.hi};
        }
      } else {
        auto opts = c.eif_options;
        opts.K = c.K;
        const CrossFit cf(table, opts, replicate_seed);
        const auto e0 = cf.estimate(0, 0.0);
        for (std::size_t j = 0; j < c.gamma1.size(); ++j) {
          const auto e1 = cf.estimate(1, c.gamma1[j]);
          const auto r = variance_and_ci(cf.difference(e1, e0, {0.0, c.gamma1[j]}), cf.folds(), c.alpha);
          out[e][j] = ReplicateDraw{r.point, std::sqrt(*r.sigma2 / static_cast<double>(table.size())),
                                    r.lo <= truth[j] && truth[j] <= r.hi};
        }
      }
    } catch (const EstimationError&) {
    } catch (const PositivityError&) {
    }
  }
  return out;
}

}  // namespace detail

/// Runs every (estimator, gamma1) cell on the same replicate datasets.
/// gamma0 is fixed at 0. Replicate r uses the seed derived from
/// (seed, simulation, r + 1) for data, folds and bootstrap draws.
inline std::vector<ReplicationReport> run_study(const DgpSpec& dgp, const StudyConfig& c) {
  c.validate();
  std::vector<double> truth;
  for (double g : c.gamma1) truth.push_back(true_theta(dgp, {0.0, g}).tate);
  std::vector<std::vector<std::vector<std::optional<ReplicateDraw>>>> draws(c.replicates);
  parallel_for(c.replicates, c.threads, [&](std::size_t r) {
    draws[r] = detail::run_replicate(dgp, c, truth, rng::derive_seed(c.seed, rng::Stream::simulation, r + 1));
  });

  std::vector<ReplicationReport> out;
  for (std::size_t e = 0; e < c.estimators.size(); ++e) {
    for (std::size_t j = 0; j < c.gamma1.size(); ++j) {
      ReplicationReport rep;
      rep.estimator = c.estimators[e];
      rep.scenario = dgp.scenario;
      rep.n = c.n;
      rep.gamma1 = c.gamma1[j];
      rep.truth = truth[j];
      rep.seed = c.seed;
      for (const auto& d : draws) {
        const auto& cell = d[e][j];
        if (!cell) {
          ++rep.failed;
          continue;
        }
        rep.estimates.push_back(cell->estimate);
        rep.standard_errors.push_back(cell->se);
        rep.covered.push_back(cell->covered);
      }
      if (static_cast<double>(rep.failed) > c.max_failure_fraction * static_cast<double>(c.replicates)) {
        throw EstimationError("simulation: " + std::to_string(rep.failed) + " of " + std::to_string(c.replicates) +
                              " replicates failed for " + to_string(rep.estimator));
      }
      summarize(rep);
      out.push_back(std::move(rep));
    }
  }
  return out;
}

/// Table with Bias, RMSE, Emp.SD and Est.SE multiplied by 1000.
inline std::string to_csv(std::span<const ReplicationReport> reports) {
  std::ostringstream os;
  os << "scenario,estimator,n,gamma0,gamma1,truth,bias_x1000,rmse_x1000,emp_sd_x1000,est_se_x1000,rate,replicates,"
        "failed,seed\n";
  for (const auto& r : reports) {
    os << to_string(r.scenario) << ',' << (r.estimator == InferenceMethod::or_bootstrap ? "OR" : "EIF") << ',' << r.n
       << ",0," << format_number(r.gamma1) << ',' << format_number(r.truth) << ',' << format_number(r.bias * 1000.0)
       << ',' << format_number(r.rmse * 1000.0) << ',' << format_number(r.emp_sd * 1000.0) << ','
       << format_number(r.est_se * 1000.0) << ',' << format_number(r.rate) << ',' << r.replicates << ',' << r.failed
       << ',' << r.seed << '\n';
  }
  return os.str();
}

}  // namespace tate::sim
