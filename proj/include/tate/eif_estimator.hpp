#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tate/data_model.hpp"
#include "tate/errors.hpp"
#include "tate/nuisance.hpp"
#include "tate/or_estimator.hpp"
#include "tate/report.hpp"
#include "tate/tilt.hpp"

namespace tate {

/// How the outcome residual Y - mu_a(X) is weighted in the source term.
///   arm_specific: 1{A = a} / P(A = a | X). Residuals of the other arm drop
///                 out, so the term has conditional mean zero.
///   both_arms:    A / pi(X) + (1 - A) / (1 - pi(X)) applied to every source
///                 row, as some printed statements of the estimator read.
///                 Biased whenever mu_0 != mu_1; kept for comparison only.
enum class ResidualWeighting { arm_specific, both_arms };

struct FoldNuisances {
  int fold = 0;
  PropensityModel propensity;
  std::array<OutcomeModel, 2> mu;
  std::array<SharedOutcomeModel, 2> rho;
  DensityRatioModel w;
};

struct EifOptions {
  int K = 2;
  MuMethod mu_method = MuMethod::frequency;
  WlsOptions wls;
  DensityMethod w_method = DensityMethod::discrete_ratio;
  LogisticOptions logistic;
  ClipBounds clip_pi = kDefaultPropensityClip;
  ClipBounds clip_w = kDefaultDensityRatioClip;
  std::optional<PropensityModel> known_propensity;
  ResidualWeighting residual = ResidualWeighting::arm_specific;
  /// Applied to every fold's nuisances after fitting. Meant for robustness
  /// studies that replace or perturb individual nuisance functions.
  std::function<void(FoldNuisances&)> adjust_nuisances;
};

/// Fits all four nuisances on the rows with nonzero weight.
inline FoldNuisances fit_nuisances(const ObservationTable& t, const EifOptions& opts, RowWeights w, int fold = 0) {
  FoldNuisances n;
  n.fold = fold;
  n.propensity = clip(opts.known_propensity ? *opts.known_propensity : fit_propensity_frequency(t, w), opts.clip_pi);
  for (int arm : {0, 1}) {
    auto& mu = n.mu[static_cast<std::size_t>(arm)];
    mu = opts.mu_method == MuMethod::frequency ? fit_mu_frequency(t, arm, w)
                                               : fit_mu_wls(t, arm, n.propensity, opts.wls, w);
    n.rho[static_cast<std::size_t>(arm)] = fit_rho(t, mu, w);
  }
  n.w = clip(opts.w_method == DensityMethod::discrete_ratio ? fit_w_discrete(t, w)
                                                            : fit_w_offset_logistic(t, opts.logistic, w),
             opts.clip_w);
  if (opts.adjust_nuisances) opts.adjust_nuisances(n);
  return n;
}

/// Uncentered EIF contributions of one row. A source row contributes only
/// `source`, a target row only `target`.
struct EifTerms {
  double source = 0.0;
  double target = 0.0;
};

namespace detail {

inline double residual_weight(ResidualWeighting mode, int treatment, int arm, double pi) {
  if (mode == ResidualWeighting::arm_specific) {
    if (treatment != arm) return 0.0;
    return 1.0 / (arm == 1 ? pi : 1.0 - pi);
  }
  return treatment == 1 ? 1.0 / pi : 1.0 / (1.0 - pi);
}

[[noreturn]] inline void unevaluable(const ObservationTable& t, std::size_t row) {
  throw EstimationError("eif: nuisances undefined at stratum (" +
                        (t.is_source(row) ? t.layout().x_label(t.x_stratum(row)) : t.layout().v_label(t.v_stratum(row))) +
                        ")");
}

}  // namespace detail

/// Binary-outcome terms:
///   source: w(V) e^g / [e^g rho(V) + 1 - rho(V)]^2
///           * { r(A, X) (Y - mu(X)) + mu(X) - rho(V) }
///   target: tilt_binary(rho(V), g)
/// with r the residual weight selected by `mode`.
inline EifTerms eif_terms(const ObservationTable& t, std::size_t row, const FoldNuisances& n, int arm, double gamma,
                          ResidualWeighting mode = ResidualWeighting::arm_specific) {
  const auto v = t.v_stratum(row);
  const double rho = n.rho[static_cast<std::size_t>(arm)].at(v);
  if (std::isnan(rho)) detail::unevaluable(t, row);
  EifTerms out;
  if (!t.is_source(row)) {
    out.target = tilt_binary(rho, gamma);
    return out;
  }
  const auto x = t.x_stratum(row);
  const double mu = n.mu[static_cast<std::size_t>(arm)].at(x);
  const double pi = n.propensity.at(x);
  const double w = n.w.at(v);
  if (std::isnan(mu) || std::isnan(pi) || std::isnan(w)) detail::unevaluable(t, row);
  const double r = detail::residual_weight(mode, t.treatment(row), arm, pi);
  out.source = w * tilt_slope(rho, gamma) * (r * (t.outcome(row) - mu) + mu - rho);
  return out;
}

/// Continuous-outcome terms. With N, D the tilted moments E[e^{gY} Y] and
/// E[e^{gY}] (suffix x: given X and arm a; suffix v: averaged to V):
///   source: w(V) ( r(A, X) [ e^{gY} Y / Dv - Nx / Dv - e^{gY} Nv / Dv^2
///                           + Dx Nv / Dv^2 ]
///                  + Nx / Dv - Nv Dx / Dv^2 )
///   target: Nv / Dv
/// On 0/1 outcomes this equals eif_terms exactly.
inline EifTerms eif_continuous(const ObservationTable& t, std::size_t row, const TiltedMomentModel& m,
                               const DensityRatioModel& ratio, const PropensityModel& propensity,
                               ResidualWeighting mode = ResidualWeighting::arm_specific) {
  const auto v = static_cast<std::size_t>(t.v_stratum(row));
  const double nv = m.numerator_v[v];
  const double dv = m.denominator_v[v];
  if (std::isnan(nv)) detail::unevaluable(t, row);
  if (!(dv > 0.0)) throw EstimationError("eif: zero tilted denominator moment");
  EifTerms out;
  if (!t.is_source(row)) {
    out.target = nv / dv;
    return out;
  }
  const auto x = t.x_stratum(row);
  const double nx = m.numerator_x[static_cast<std::size_t>(x)];
  const double dx = m.denominator_x[static_cast<std::size_t>(x)];
  const double pi = propensity.at(x);
  const double w = ratio.at(t.v_stratum(row));
  if (std::isnan(nx) || std::isnan(pi) || std::isnan(w)) detail::unevaluable(t, row);
  const double y = t.outcome(row);
  const double ey = std::exp(m.gamma * y);
  const double r = detail::residual_weight(mode, t.treatment(row), m.arm, pi);
  const double dv2 = dv * dv;
  const double residual = ey * y / dv - nx / dv - ey * nv / dv2 + dx * nv / dv2;
  out.source = w * (r * residual + nx / dv - nv * dx / dv2);
  return out;
}

/// Cross-fitted estimate of one estimand with its retained per-row EIF values.
struct EifEstimate {
  Estimand estimand = Estimand::theta1;
  SensitivityPair gamma;
  int K = 0;
  std::vector<double> fold_estimates;
  double estimate = 0.0;
  double sigma2 = 0.0;
  std::size_t n = 0;
  /// Centered, scaled EIF per row: (n / n_s) * source term on source rows and
  /// (n / n_t) * (target term - estimate) on target rows.
  std::vector<double> eif;
};

/// sigma^2 = K^-1 sum_k |I_k|^-1 sum_{i in I_k} eif_i^2.
inline double plug_in_variance(std::span<const double> eif, const FoldAssignment& folds) {
  std::vector<double> sum(static_cast<std::size_t>(folds.K), 0.0);
  std::vector<double> count(static_cast<std::size_t>(folds.K), 0.0);
  for (std::size_t i = 0; i < eif.size(); ++i) {
    const auto k = static_cast<std::size_t>(folds.fold[i]);
    sum[k] += eif[i] * eif[i];
    count[k] += 1.0;
  }
  double s = 0.0;
  for (std::size_t k = 0; k < sum.size(); ++k) s += sum[k] / count[k];
  return s / static_cast<double>(folds.K);
}

/// Wald interval estimate -/+ z_{1 - alpha/2} sigma / sqrt(n), n = n_s + n_t.
inline EstimateReport variance_and_ci(const EifEstimate& e, const FoldAssignment& folds, double alpha,
                                      std::uint64_t seed = 0) {
  validate_alpha(alpha);
  const double sigma2 = plug_in_variance(e.eif, folds);
  const double half = normal_quantile(1.0 - alpha / 2.0) * std::sqrt(sigma2 / static_cast<double>(e.n));
  EstimateReport r;
  r.estimand = e.estimand;
  r.gamma = e.gamma;
  r.point = e.estimate;
  r.lo = e.estimate - half;
  r.hi = e.estimate + half;
  r.level = 1.0 - alpha;
  r.method = InferenceMethod::eif_wald;
  r.K = folds.K;
  r.sigma2 = sigma2;
  r.seed = seed;
  return r;
}

/// Cross-fitting state: folds, per-fold nuisances fitted out of fold, and the
/// gamma-independent parts of every row's EIF. Evaluating a new gamma costs
/// one pass over the rows.
class CrossFit {
 public:
  CrossFit(const ObservationTable& t, const EifOptions& opts, std::uint64_t seed)
      : table_(t), opts_(opts), seed_(seed) {
    opts_.clip_pi.validate();
    opts_.clip_w.validate();
    require_positivity(t);
    folds_ = kfold(t, opts.K, seed);
    const std::size_t n = t.size();
    for (int k = 0; k < opts.K; ++k) {
      auto w = folds_.complement_weights(k);
      try {
        nuisances_.push_back(fit_nuisances(t, opts_, w, k));
      } catch (const Error& e) {
        throw EstimationError("eif: fold " + std::to_string(k + 1) + " of " + std::to_string(opts.K) + ": " + e.what());
      }
      if (t.schema().outcome_kind == OutcomeKind::continuous) complements_.push_back(std::move(w));
    }
    std::vector<double> source_in(static_cast<std::size_t>(opts.K), 0.0);
    std::vector<double> target_in(static_cast<std::size_t>(opts.K), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      (t.is_source(i) ? source_in : target_in)[static_cast<std::size_t>(folds_.fold[i])] += 1.0;
    }
    source_count_ = std::move(source_in);
    target_count_ = std::move(target_in);

    if (t.schema().outcome_kind == OutcomeKind::binary) {
      for (int arm : {0, 1}) {
        auto& p = pieces_[static_cast<std::size_t>(arm)];
        p.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
          const auto& nu = nuisances_[static_cast<std::size_t>(folds_.fold[i])];
          const auto v = t.v_stratum(i);
          const double rho = nu.rho[static_cast<std::size_t>(arm)].at(v);
          if (std::isnan(rho)) detail::unevaluable(t, i);
          if (!t.is_source(i)) {
            p[i] = {0.0, rho, 0.0};
            continue;
          }
          const auto x = t.x_stratum(i);
          const double mu = nu.mu[static_cast<std::size_t>(arm)].at(x);
          const double pi = nu.propensity.at(x);
          const double w = nu.w.at(v);
          if (std::isnan(mu) || std::isnan(pi) || std::isnan(w)) detail::unevaluable(t, i);
          const double r = detail::residual_weight(opts_.residual, t.treatment(i), arm, pi);
          p[i] = {w, rho, r * (t.outcome(i) - mu) + mu - rho};
        }
      }
    }
  }

  const FoldAssignment& folds() const noexcept { return folds_; }
  const std::vector<FoldNuisances>& nuisances() const noexcept { return nuisances_; }

  EifEstimate estimate(int arm, double gamma) const {
    const auto terms = row_terms(arm, gamma);
    EifEstimate e;
    e.estimand = arm == 1 ? Estimand::theta1 : Estimand::theta0;
    e.gamma = arm == 1 ? SensitivityPair{0.0, gamma} : SensitivityPair{gamma, 0.0};
    finish(e, terms);
    return e;
  }

  /// TATE with per-row EIF difference (same folds and nuisances for both arms).
  EifEstimate tate(SensitivityPair g) const {
    return difference(estimate(1, g.gamma1), estimate(0, g.gamma0), g);
  }

  EifEstimate difference(const EifEstimate& e1, const EifEstimate& e0, SensitivityPair g) const {
    EifEstimate e;
    e.estimand = Estimand::tate;
    e.gamma = g;
    e.K = folds_.K;
    e.n = e1.n;
    e.estimate = e1.estimate - e0.estimate;
    e.fold_estimates.resize(e1.fold_estimates.size());
    for (std::size_t k = 0; k < e.fold_estimates.size(); ++k) {
      e.fold_estimates[k] = e1.fold_estimates[k] - e0.fold_estimates[k];
    }
    e.eif.resize(e1.eif.size());
    for (std::size_t i = 0; i < e.eif.size(); ++i) e.eif[i] = e1.eif[i] - e0.eif[i];
    e.sigma2 = plug_in_variance(e.eif, folds_);
    return e;
  }

  GridEstimate report(SensitivityPair g, double alpha) const {
    const auto e1 = estimate(1, g.gamma1);
    const auto e0 = estimate(0, g.gamma0);
    GridEstimate out;
    out.gamma = g;
    out.theta1 = variance_and_ci(e1, folds_, alpha, seed_);
    out.theta0 = variance_and_ci(e0, folds_, alpha, seed_);
    out.tate = variance_and_ci(difference(e1, e0, g), folds_, alpha, seed_);
    out.theta1.gamma = g;
    out.theta0.gamma = g;
    return out;
  }

 private:
  struct Piece {
    double w;        // density ratio (source rows)
    double rho;
    double bracket;  // r (Y - mu) + mu - rho (source rows)
  };

  /// Uncentered per-row term: source term on source rows, target term on
  /// target rows.
  std::vector<double> row_terms(int arm, double gamma) const {
    const std::size_t n = table_.size();
    std::vector<double> out(n);
    if (table_.schema().outcome_kind == OutcomeKind::binary) {
      const auto& p = pieces_[static_cast<std::size_t>(arm)];
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = table_.is_source(i) ? p[i].w * tilt_slope(p[i].rho, gamma) * p[i].bracket
                                     : tilt_binary(p[i].rho, gamma);
      }
      return out;
    }
    for (int k = 0; k < folds_.K; ++k) {
      const auto& nu = nuisances_[static_cast<std::size_t>(k)];
      const auto moments = fit_tilted_moments(table_, arm, gamma, complements_[static_cast<std::size_t>(k)]);
      for (std::size_t i = 0; i < n; ++i) {
        if (folds_.fold[i] != k) continue;
        const auto terms = eif_continuous(table_, i, moments, nu.w, nu.propensity, opts_.residual);
        out[i] = table_.is_source(i) ? terms.source : terms.target;
      }
    }
    return out;
  }

  void finish(EifEstimate& e, const std::vector<double>& terms) const {
    const auto K = static_cast<std::size_t>(folds_.K);
    std::vector<double> src(K, 0.0);
    std::vector<double> tgt(K, 0.0);
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const auto k = static_cast<std::size_t>(folds_.fold[i]);
      (table_.is_source(i) ? src : tgt)[k] += terms[i];
    }
    e.K = folds_.K;
    e.fold_estimates.resize(K);
    double pooled = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      e.fold_estimates[k] = src[k] / source_count_[k] + tgt[k] / target_count_[k];
      pooled += e.fold_estimates[k];
    }
    e.estimate = pooled / static_cast<double>(K);
    const auto n = static_cast<double>(table_.size());
    const double scale_s = n / static_cast<double>(table_.n_source());
    const double scale_t = n / static_cast<double>(table_.n_target());
    e.n = table_.size();
    e.eif.resize(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
      e.eif[i] = table_.is_source(i) ? scale_s * terms[i] : scale_t * (terms[i] - e.estimate);
    }
    e.sigma2 = plug_in_variance(e.eif, folds_);
  }

  ObservationTable table_;
  EifOptions opts_;
  std::uint64_t seed_;
  FoldAssignment folds_;
  std::vector<FoldNuisances> nuisances_;
  std::vector<std::vector<double>> complements_;
  std::vector<double> source_count_;
  std::vector<double> target_count_;
  std::array<std::vector<Piece>, 2> pieces_;
};

struct CrossFitResult {
  EifEstimate theta1;
  EifEstimate theta0;
  EifEstimate tate;
  FoldAssignment folds;
};

inline CrossFitResult crossfit_estimate(const ObservationTable& t, SensitivityPair g, std::uint64_t seed,
                                        const EifOptions& opts = {}) {
  const CrossFit cf(t, opts, seed);
  CrossFitResult r;
  r.theta1 = cf.estimate(1, g.gamma1);
  r.theta0 = cf.estimate(0, g.gamma0);
  r.tate = cf.difference(r.theta1, r.theta0, g);
  r.folds = cf.folds();
  return r;
}

/// EIF estimates with Wald intervals at every grid point, one cross-fit.
inline std::vector<GridEstimate> eif_grid_estimates(const ObservationTable& t, const GammaGrid& grid, double alpha,
                                                    std::uint64_t seed, const EifOptions& opts = {},
                                                    unsigned threads = 1) {
  grid.validate();
  validate_alpha(alpha);
  const CrossFit cf(t, opts, seed);
  const auto g0 = grid.gamma0.values();
  const auto g1 = grid.gamma1.values();
  std::vector<EifEstimate> arm1(g1.size());
  std::vector<EifEstimate> arm0(g0.size());
  parallel_for(g1.size(), threads, [&](std::size_t j) { arm1[j] = cf.estimate(1, g1[j]); });
  parallel_for(g0.size(), threads, [&](std::size_t j) { arm0[j] = cf.estimate(0, g0[j]); });
  std::vector<GridEstimate> out(g0.size() * g1.size());
  parallel_for(out.size(), threads, [&](std::size_t idx) {
    const std::size_t i = idx / g1.size();
    const std::size_t j = idx % g1.size();
    const SensitivityPair g{g0[i], g1[j]};
    auto& o = out[idx];
    o.gamma = g;
    o.theta1 = variance_and_ci(arm1[j], cf.folds(), alpha, seed);
    o.theta0 = variance_and_ci(arm0[i], cf.folds(), alpha, seed);
    o.theta1.gamma = g;
    o.theta0.gamma = g;
    o.tate = variance_and_ci(cf.difference(arm1[j], arm0[i], g), cf.folds(), alpha, seed);
  });
  return out;
}

}  // namespace tate
