#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tate/data_model.hpp"
#include "tate/errors.hpp"
#include "tate/nuisance.hpp"
#include "tate/parallel.hpp"
#include "tate/report.hpp"
#include "tate/rng.hpp"
#include "tate/tilt.hpp"

namespace tate {

// ---------------------------------------------------------------------------
// Target means under the tilt

/// Target-sample mean of tilt_binary(rho(V), gamma).
inline double theta_or_binary(const SharedOutcomeModel& rho, const ObservationTable& t, double gamma,
                              RowWeights w = {}) {
  double sum = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0 || t.is_source(i)) continue;
    const double r = rho.at(t.v_stratum(i));
    if (std::isnan(r)) {
      throw PositivityError("theta: no source information at target level (" + t.layout().v_label(t.v_stratum(i)) +
                            ")");
    }
    sum += wi * tilt_binary(r, gamma);
    total += wi;
  }
  if (total == 0.0) throw EstimationError("theta: empty target sample");
  return sum / total;
}

/// Target-sample mean of E[e^{gY} Y | V] / E[e^{gY} | V].
inline double theta_or_continuous(const TiltedMomentModel& m, const ObservationTable& t, RowWeights w = {}) {
  double sum = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0 || t.is_source(i)) continue;
    const auto v = static_cast<std::size_t>(t.v_stratum(i));
    const double num = m.numerator_v[v];
    const double den = m.denominator_v[v];
    if (std::isnan(num)) {
      throw PositivityError("theta: no source information at target level (" + t.layout().v_label(t.v_stratum(i)) +
                            ")");
    }
    if (!(den > 0.0)) throw EstimationError("theta: zero tilted denominator moment");
    sum += wi * num / den;
    total += wi;
  }
  if (total == 0.0) throw EstimationError("theta: empty target sample");
  return sum / total;
}

// ---------------------------------------------------------------------------
// Outcome-regression fit

struct OrOptions {
  MuMethod mu_method = MuMethod::frequency;
  WlsOptions wls;
  ClipBounds clip_pi = kDefaultPropensityClip;
  /// Used for the wls-ipw weights instead of a fitted propensity.
  std::optional<PropensityModel> known_propensity;
};

/// The gamma-independent part of the OR estimator: rho_a(v) for each arm and
/// the target distribution of V. Continuous outcomes keep the weighted sample,
/// since their tilted moments depend on gamma.
class OrFit {
 public:
  static OrFit fit(const ObservationTable& t, const OrOptions& opts, RowWeights w = {}) {
    require_positivity(t, w);
    OrFit f;
    f.kind_ = t.schema().outcome_kind;
    const auto& layout = t.layout();
    std::vector<double> target(layout.v_count(), 0.0);
    double nt = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double wi = weight_at(w, i);
      if (wi == 0.0 || t.is_source(i)) continue;
      target[static_cast<std::size_t>(t.v_stratum(i))] += wi;
      nt += wi;
    }
    if (nt == 0.0) throw EstimationError("or: empty target sample");
    for (std::size_t v = 0; v < target.size(); ++v) {
      if (target[v] > 0.0) f.target_share_.emplace_back(static_cast<std::int32_t>(v), target[v] / nt);
    }

    if (f.kind_ == OutcomeKind::continuous) {
      // Surface empty arm cells now rather than on first evaluation.
      for (int arm : {0, 1}) (void)fit_tilted_moments(t, arm, 0.0, w);
      f.table_ = t;
      f.weights_.assign(w.begin(), w.end());
      return f;
    }

    std::optional<PropensityModel> propensity;
    if (opts.mu_method == MuMethod::wls_ipw) {
      propensity = clip(opts.known_propensity ? *opts.known_propensity : fit_propensity_frequency(t, w), opts.clip_pi);
    }
    for (int arm : {0, 1}) {
      const OutcomeModel mu = opts.mu_method == MuMethod::frequency
                                  ? fit_mu_frequency(t, arm, w)
                                  : fit_mu_wls(t, arm, *propensity, opts.wls, w);
      f.rho_[static_cast<std::size_t>(arm)] = fit_rho(t, mu, w);
    }
    return f;
  }

  double theta(int arm, double gamma) const {
    if (kind_ == OutcomeKind::continuous) {
      const auto m = fit_tilted_moments(*table_, arm, gamma, weights_);
      return theta_or_continuous(m, *table_, weights_);
    }
    const auto& rho = rho_[static_cast<std::size_t>(arm)];
    double sum = 0.0;
    for (const auto& [v, share] : target_share_) sum += share * tilt_binary(rho.at(v), gamma);
    return sum;
  }

  double tate(SensitivityPair p) const { return theta(1, p.gamma1) - theta(0, p.gamma0); }

  const SharedOutcomeModel& rho(int arm) const { return rho_[static_cast<std::size_t>(arm)]; }

 private:
  OutcomeKind kind_ = OutcomeKind::binary;
  std::array<SharedOutcomeModel, 2> rho_;
  std::vector<std::pair<std::int32_t, double>> target_share_;
  std::optional<ObservationTable> table_;
  std::vector<double> weights_;
};

struct PointEstimate {
  double theta1 = 0.0;
  double theta0 = 0.0;
  double tate = 0.0;
};

inline PointEstimate estimate_point(const ObservationTable& t, const OrOptions& opts, SensitivityPair gamma) {
  const auto fit = OrFit::fit(t, opts);
  PointEstimate p;
  p.theta1 = fit.theta(1, gamma.gamma1);
  p.theta0 = fit.theta(0, gamma.gamma0);
  p.tate = p.theta1 - p.theta0;
  return p;
}

// ---------------------------------------------------------------------------
// Percentile bootstrap

/// Q(tau) = inf{t : #(x <= t) / B >= tau} over sorted values, which is the
/// ceil(B tau)-th order statistic.
inline double percentile_quantile(std::span<const double> sorted, double tau) {
  if (sorted.empty()) throw EstimationError("quantile of an empty replicate set");
  const auto B = static_cast<double>(sorted.size());
  // Guard against B * tau landing a hair above an integer in floating point.
  const double scaled = B * tau;
  auto k = static_cast<std::size_t>(std::ceil(scaled - 1e-9 * std::max(1.0, scaled)));
  k = std::clamp<std::size_t>(k, 1, sorted.size());
  return sorted[k - 1];
}

struct BootstrapDistribution {
  std::vector<double> replicates;  // in replicate order

  double quantile(double tau) const {
    std::vector<double> sorted = replicates;
    std::sort(sorted.begin(), sorted.end());
    return percentile_quantile(sorted, tau);
  }
};

struct BootstrapOptions {
  std::size_t B = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Abort when more than this fraction of replicates fail to fit.
  double max_failure_fraction = 0.01;

  void validate() const {
    if (B < 2) throw ConfigError("bootstrap: B must be at least 2");
    validate_alpha(alpha);
  }
};

/// Reports for one grid point.
struct GridEstimate {
  SensitivityPair gamma;
  EstimateReport theta1;
  EstimateReport theta0;
  EstimateReport tate;
};

namespace detail {

/// Replicate values of theta_a along each gamma axis: theta1[b][j] is
/// replicate b at gamma1 value j. Failed replicates are dropped.
struct ReplicateSurface {
  std::vector<std::vector<double>> theta1;
  std::vector<std::vector<double>> theta0;
  std::size_t failed = 0;
};

inline ReplicateSurface bootstrap_surface(const ObservationTable& t, std::span<const double> gamma0_values,
                                          std::span<const double> gamma1_values, const BootstrapOptions& opts,
                                          const OrOptions& or_opts) {
  const auto compressed = compress(t);
  std::vector<std::optional<std::pair<std::vector<double>, std::vector<double>>>> slots(opts.B);
  parallel_for(opts.B, opts.threads, [&](std::size_t b) {
    auto eng = rng::engine(opts.seed, rng::Stream::bootstrap, b);
    const auto weights = multinomial_weights(compressed.cells, compressed.counts, eng);
    try {
      const auto fit = OrFit::fit(compressed.cells, or_opts, weights);
      std::vector<double> th1(gamma1_values.size());
      std::vector<double> th0(gamma0_values.size());
      for (std::size_t j = 0; j < th1.size(); ++j) th1[j] = fit.theta(1, gamma1_values[j]);
      for (std::size_t j = 0; j < th0.size(); ++j) th0[j] = fit.theta(0, gamma0_values[j]);
      slots[b].emplace(std::move(th1), std::move(th0));
    } catch (const EstimationError&) {
    } catch (const PositivityError&) {
    }
  });
  ReplicateSurface s;
  for (auto& slot : slots) {
    if (!slot) {
      ++s.failed;
      continue;
    }
    s.theta1.push_back(std::move(slot->first));
    s.theta0.push_back(std::move(slot->second));
  }
  if (static_cast<double>(s.failed) > opts.max_failure_fraction * static_cast<double>(opts.B)) {
    throw EstimationError("bootstrap: " + std::to_string(s.failed) + " of " + std::to_string(opts.B) +
                          " replicates could not be fitted (limit " +
                          std::to_string(opts.max_failure_fraction * 100.0) + "%)");
  }
  return s;
}

inline EstimateReport percentile_report(Estimand e, SensitivityPair g, double point, std::vector<double>& values,
                                        const BootstrapOptions& opts, std::size_t failed) {
  std::sort(values.begin(), values.end());
  EstimateReport r;
  r.estimand = e;
  r.gamma = g;
  r.point = point;
  r.lo = percentile_quantile(values, opts.alpha / 2.0);
  r.hi = percentile_quantile(values, 1.0 - opts.alpha / 2.0);
  r.level = 1.0 - opts.alpha;
  r.method = InferenceMethod::or_bootstrap;
  r.B = opts.B;
  r.failed = failed;
  r.seed = opts.seed;
  return r;
}

}  // namespace detail

/// OR estimates with percentile-bootstrap intervals at every grid point. The
/// same B resampled tables serve every grid point; nuisances are refitted in
/// each replicate.
inline std::vector<GridEstimate> grid_estimates(const ObservationTable& t, const GammaGrid& grid,
                                                const BootstrapOptions& opts, const OrOptions& or_opts = {}) {
  opts.validate();
  grid.validate();
  const auto g0 = grid.gamma0.values();
  const auto g1 = grid.gamma1.values();
  const auto fit = OrFit::fit(t, or_opts);
  const auto surface = detail::bootstrap_surface(t, g0, g1, opts, or_opts);
  const std::size_t kept = surface.theta1.size();

  std::vector<double> point1(g1.size());
  std::vector<double> point0(g0.size());
  for (std::size_t j = 0; j < g1.size(); ++j) point1[j] = fit.theta(1, g1[j]);
  for (std::size_t j = 0; j < g0.size(); ++j) point0[j] = fit.theta(0, g0[j]);

  std::vector<EstimateReport> arm1(g1.size());
  std::vector<EstimateReport> arm0(g0.size());
  std::vector<double> values(kept);
  for (std::size_t j = 0; j < g1.size(); ++j) {
    for (std::size_t b = 0; b < kept; ++b) values[b] = surface.theta1[b][j];
    arm1[j] = detail::percentile_report(Estimand::theta1, {0.0, g1[j]}, point1[j], values, opts, surface.failed);
  }
  for (std::size_t j = 0; j < g0.size(); ++j) {
    for (std::size_t b = 0; b < kept; ++b) values[b] = surface.theta0[b][j];
    arm0[j] = detail::percentile_report(Estimand::theta0, {g0[j], 0.0}, point0[j], values, opts, surface.failed);
  }

  std::vector<GridEstimate> out;
  out.reserve(g0.size() * g1.size());
  for (std::size_t i = 0; i < g0.size(); ++i) {
    for (std::size_t j = 0; j < g1.size(); ++j) {
      const SensitivityPair g{g0[i], g1[j]};
      for (std::size_t b = 0; b < kept; ++b) values[b] = surface.theta1[b][j] - surface.theta0[b][i];
      GridEstimate e;
      e.gamma = g;
      e.theta1 = arm1[j];
      e.theta1.gamma = g;
      e.theta0 = arm0[i];
      e.theta0.gamma = g;
      e.tate = detail::percentile_report(Estimand::tate, g, point1[j] - point0[i], values, opts, surface.failed);
      out.push_back(std::move(e));
    }
  }
  return out;
}

struct BootstrapResult {
  GridEstimate estimate;
  BootstrapDistribution theta1;
  BootstrapDistribution theta0;
  BootstrapDistribution tate;
};

/// Algorithm: resample source and target separately B times, refit, and read
/// the alpha/2 and 1 - alpha/2 percentiles of the replicate estimates.
inline BootstrapResult bootstrap_ci(const ObservationTable& t, SensitivityPair gamma, const BootstrapOptions& opts,
                                    const OrOptions& or_opts = {}) {
  opts.validate();
  const double g0[] = {gamma.gamma0};
  const double g1[] = {gamma.gamma1};
  const auto fit = OrFit::fit(t, or_opts);
  const auto surface = detail::bootstrap_surface(t, g0, g1, opts, or_opts);
  BootstrapResult r;
  for (std::size_t b = 0; b < surface.theta1.size(); ++b) {
    r.theta1.replicates.push_back(surface.theta1[b][0]);
    r.theta0.replicates.push_back(surface.theta0[b][0]);
    r.tate.replicates.push_back(surface.theta1[b][0] - surface.theta0[b][0]);
  }
  const double p1 = fit.theta(1, gamma.gamma1);
  const double p0 = fit.theta(0, gamma.gamma0);
  auto v1 = r.theta1.replicates;
  auto v0 = r.theta0.replicates;
  auto vt = r.tate.replicates;
  r.estimate.gamma = gamma;
  r.estimate.theta1 = detail::percentile_report(Estimand::theta1, gamma, p1, v1, opts, surface.failed);
  r.estimate.theta0 = detail::percentile_report(Estimand::theta0, gamma, p0, v0, opts, surface.failed);
  r.estimate.tate = detail::percentile_report(Estimand::tate, gamma, p1 - p0, vt, opts, surface.failed);
  return r;
}

}  // namespace tate
