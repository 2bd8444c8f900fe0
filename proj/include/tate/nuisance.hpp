#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "tate/data_model.hpp"
#include "tate/errors.hpp"

namespace tate {

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

struct ClipBounds {
  double lo = 0.0;
  double hi = 0.0;

  void validate() const {
    if (!(lo > 0.0) || !(lo <= hi) || !std::isfinite(hi)) {
      throw ConfigError("clip bounds must satisfy 0 < lo <= hi < inf");
    }
  }
  double apply(double v) const noexcept { return std::isnan(v) ? v : std::clamp(v, lo, hi); }
};

inline constexpr ClipBounds kDefaultPropensityClip{0.01, 0.99};
inline constexpr ClipBounds kDefaultDensityRatioClip{0.01, 100.0};

enum class MuMethod { frequency, wls_ipw };
enum class DensityMethod { discrete_ratio, offset_logistic };

inline const char* to_string(MuMethod m) { return m == MuMethod::frequency ? "frequency" : "wls-ipw"; }
inline const char* to_string(DensityMethod m) {
  return m == DensityMethod::discrete_ratio ? "discrete-ratio" : "offset-logistic";
}

// ---------------------------------------------------------------------------
// Model types. Every map is tabulated over the full stratum space; NaN marks
// strata the fit has no information about.

struct PropensityModel {
  enum class Origin { known, fitted };

  Origin origin = Origin::fitted;
  std::vector<double> by_x;
  std::optional<ClipBounds> clip;

  double at(std::int32_t x) const { return clip ? clip->apply(by_x[static_cast<std::size_t>(x)]) : by_x[static_cast<std::size_t>(x)]; }
  /// P(A = arm | X = x).
  double arm_probability(std::int32_t x, int arm) const {
    const double p = at(x);
    return arm == 1 ? p : 1.0 - p;
  }
};

struct OutcomeModel {
  int arm = 1;
  MuMethod method = MuMethod::frequency;
  std::vector<double> by_x;
  bool clamp_unit = true;
  // wls-ipw only
  bool saturated = false;
  std::vector<std::string> terms;
  std::vector<double> coefficients;

  double at(std::int32_t x) const {
    const double v = by_x[static_cast<std::size_t>(x)];
    return clamp_unit && !std::isnan(v) ? std::clamp(v, 0.0, 1.0) : v;
  }
};

struct SharedOutcomeModel {
  int arm = 1;
  std::vector<double> by_v;

  double at(std::int32_t v) const { return by_v[static_cast<std::size_t>(v)]; }
};

struct DensityRatioModel {
  DensityMethod method = DensityMethod::discrete_ratio;
  std::vector<double> by_v;
  std::optional<ClipBounds> clip;
  // offset-logistic only
  std::vector<std::string> terms;
  std::vector<double> beta;
  double offset = 0.0;
  int iterations = 0;

  double at(std::int32_t v) const {
    const double w = by_v[static_cast<std::size_t>(v)];
    return clip ? clip->apply(w) : w;
  }
};

/// Conditional moments of exp(gamma Y) Y and exp(gamma Y) for one arm, at the
/// X level and averaged to the V level over the source X distribution.
struct TiltedMomentModel {
  int arm = 1;
  double gamma = 0.0;
  std::vector<double> numerator_x;
  std::vector<double> denominator_x;
  std::vector<double> numerator_v;
  std::vector<double> denominator_v;
};

inline PropensityModel clip(const PropensityModel& m, ClipBounds b) {
  b.validate();
  PropensityModel out = m;
  out.clip = b;
  return out;
}

inline DensityRatioModel clip(const DensityRatioModel& m, ClipBounds b) {
  b.validate();
  DensityRatioModel out = m;
  out.clip = b;
  return out;
}

// ---------------------------------------------------------------------------
// Propensity

inline PropensityModel fit_propensity_frequency(const ObservationTable& t, RowWeights w = {}) {
  const auto& layout = t.layout();
  std::vector<double> total(layout.x_count(), 0.0);
  std::vector<double> treated(layout.x_count(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0 || !t.is_source(i)) continue;
    const auto x = static_cast<std::size_t>(t.x_stratum(i));
    total[x] += wi;
    if (t.treatment(i) == 1) treated[x] += wi;
  }
  PropensityModel m;
  m.origin = PropensityModel::Origin::fitted;
  m.by_x.assign(layout.x_count(), kUndefined);
  for (std::size_t x = 0; x < total.size(); ++x) {
    if (total[x] == 0.0) continue;
    if (treated[x] == 0.0 || treated[x] == total[x]) {
      throw EstimationError("propensity: overlap violated, stratum (" + layout.x_label(static_cast<std::int32_t>(x)) +
                            ") has a single treatment arm");
    }
    m.by_x[x] = treated[x] / total[x];
  }
  return m;
}

/// Design-supplied randomization probabilities, one per X stratum (NaN for
/// strata that never occur).
inline PropensityModel known_propensity(std::vector<double> by_x) {
  for (double p : by_x) {
    if (!std::isnan(p) && !(p > 0.0 && p < 1.0)) throw ConfigError("known propensity values must lie in (0, 1)");
  }
  PropensityModel m;
  m.origin = PropensityModel::Origin::known;
  m.by_x = std::move(by_x);
  return m;
}

// ---------------------------------------------------------------------------
// Outcome regression on X

inline OutcomeModel fit_mu_frequency(const ObservationTable& t, int arm, RowWeights w = {}) {
  const auto& layout = t.layout();
  std::vector<double> any_arm(layout.x_count(), 0.0);
  std::vector<double> count(layout.x_count(), 0.0);
  std::vector<double> sum(layout.x_count(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0 || !t.is_source(i)) continue;
    const auto x = static_cast<std::size_t>(t.x_stratum(i));
    any_arm[x] += wi;
    if (t.treatment(i) != arm) continue;
    count[x] += wi;
    sum[x] += wi * t.outcome(i);
  }
  OutcomeModel m;
  m.arm = arm;
  m.method = MuMethod::frequency;
  m.clamp_unit = t.schema().outcome_kind == OutcomeKind::binary;
  m.by_x.assign(layout.x_count(), kUndefined);
  for (std::size_t x = 0; x < count.size(); ++x) {
    if (any_arm[x] == 0.0) continue;
    if (count[x] == 0.0) {
      throw EstimationError("outcome regression: stratum (" + layout.x_label(static_cast<std::int32_t>(x)) +
                            ") has no rows with treatment " + std::to_string(arm));
    }
    m.by_x[x] = sum[x] / count[x];
  }
  return m;
}

struct WlsOptions {
  /// One indicator per populated X stratum instead of main-effect dummies.
  bool saturated = false;
};

namespace detail {

/// Intercept plus treatment-contrast dummies (first level is the reference)
/// for the given covariates.
struct MainEffectsDesign {
  std::vector<int> columns;
  std::vector<std::size_t> offsets;
  std::size_t width = 1;
  std::vector<std::string> terms{"(intercept)"};

  MainEffectsDesign(const CovariateSchema& s, std::vector<int> cols) : columns(std::move(cols)) {
    for (int c : columns) {
      const auto& col = s.covariates[static_cast<std::size_t>(c)];
      offsets.push_back(width);
      for (std::size_t l = 1; l < col.levels.size(); ++l) terms.push_back(col.name + "=" + col.levels[l]);
      width += col.levels.size() - 1;
    }
  }

  /// codes indexed like `columns`.
  void fill(std::span<const std::int16_t> codes, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const {
    row.setZero();
    row(0) = 1.0;
    for (std::size_t k = 0; k < columns.size(); ++k) {
      if (codes[k] > 0) row(static_cast<Eigen::Index>(offsets[k] + static_cast<std::size_t>(codes[k]) - 1)) = 1.0;
    }
  }
};

inline std::vector<int> all_columns(const CovariateSchema& s) {
  std::vector<int> out(s.covariates.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<int>(i);
  return out;
}

}  // namespace detail

/// Weighted least squares of Y on the X design over arm-`arm` source rows,
/// with weights 1 / P(A = arm | X) from `propensity` times the row weights.
/// Binary predictions are clamped to [0, 1] on evaluation.
inline OutcomeModel fit_mu_wls(const ObservationTable& t, int arm, const PropensityModel& propensity,
                               WlsOptions opts = {}, RowWeights w = {}) {
  const auto& layout = t.layout();
  const auto& schema = t.schema();
  std::vector<double> weight(layout.x_count(), 0.0);
  std::vector<double> weighted_sum(layout.x_count(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0 || !t.is_source(i) || t.treatment(i) != arm) continue;
    const auto x = t.x_stratum(i);
    const double p = propensity.arm_probability(x, arm);
    if (!(p > 0.0)) {
      throw EstimationError("wls: propensity undefined or zero for stratum (" + layout.x_label(x) + ")");
    }
    weight[static_cast<std::size_t>(x)] += wi / p;
    weighted_sum[static_cast<std::size_t>(x)] += wi / p * t.outcome(i);
  }
  std::vector<std::int32_t> populated;
  for (std::size_t x = 0; x < weight.size(); ++x) {
    if (weight[x] > 0.0) populated.push_back(static_cast<std::int32_t>(x));
  }
  if (populated.empty()) throw EstimationError("wls: no source rows in arm " + std::to_string(arm));

  OutcomeModel m;
  m.arm = arm;
  m.method = MuMethod::wls_ipw;
  m.saturated = opts.saturated;
  m.clamp_unit = schema.outcome_kind == OutcomeKind::binary;
  m.by_x.assign(layout.x_count(), kUndefined);

  const auto rows = static_cast<Eigen::Index>(populated.size());
  const detail::MainEffectsDesign design(schema, detail::all_columns(schema));
  const Eigen::Index width = opts.saturated ? rows : static_cast<Eigen::Index>(design.width);
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(rows, width);
  Eigen::VectorXd rhs(rows);
  std::vector<std::int16_t> codes(schema.covariates.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto x = populated[static_cast<std::size_t>(r)];
    const double sw = std::sqrt(weight[static_cast<std::size_t>(x)]);
    if (opts.saturated) {
      M(r, r) = sw;
    } else {
      layout.decode_x(x, codes);
      design.fill(codes, M.row(r));
      M.row(r) *= sw;
    }
    rhs(r) = sw * weighted_sum[static_cast<std::size_t>(x)] / weight[static_cast<std::size_t>(x)];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  if (qr.rank() < width) {
    throw EstimationError("wls: singular normal equations for arm " + std::to_string(arm) + " (rank " +
                          std::to_string(qr.rank()) + " < " + std::to_string(width) +
                          "); use the frequency method");
  }
  const Eigen::VectorXd beta = qr.solve(rhs);
  m.coefficients.assign(beta.data(), beta.data() + beta.size());
  if (opts.saturated) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto x = populated[static_cast<std::size_t>(r)];
      m.by_x[static_cast<std::size_t>(x)] = beta(r);
      m.terms.push_back(layout.x_label(x));
    }
  } else {
    m.terms = design.terms;
    Eigen::RowVectorXd d(width);
    for (std::size_t x = 0; x < layout.x_count(); ++x) {
      layout.decode_x(static_cast<std::int32_t>(x), codes);
      design.fill(codes, d);
      m.by_x[x] = d.dot(beta);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Outcome regression on V

inline SharedOutcomeModel fit_rho(const ObservationTable& t, const OutcomeModel& mu, RowWeights w = {}) {
  const auto& layout = t.layout();
  std::vector<double> total(layout.v_count(), 0.0);
  std::vector<double> sum(layout.v_count(), 0.0);
  std::vector<double> target(layout.v_count(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0) continue;
    const auto v = static_cast<std::size_t>(t.v_stratum(i));
    if (!t.is_source(i)) {
      target[v] += wi;
      continue;
    }
    const double m = mu.at(t.x_stratum(i));
    if (std::isnan(m)) {
      throw EstimationError("rho: outcome model undefined at stratum (" + layout.x_label(t.x_stratum(i)) + ")");
    }
    total[v] += wi;
    sum[v] += wi * m;
  }
  SharedOutcomeModel r;
  r.arm = mu.arm;
  r.by_v.assign(layout.v_count(), kUndefined);
  for (std::size_t v = 0; v < total.size(); ++v) {
    if (total[v] > 0.0) {
      r.by_v[v] = sum[v] / total[v];
    } else if (target[v] > 0.0) {
      throw PositivityError("rho: target level (" + layout.v_label(static_cast<std::int32_t>(v)) +
                            ") has no source rows");
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Density ratio of V (target over source)

inline DensityRatioModel fit_w_discrete(const ObservationTable& t, RowWeights w = {}) {
  const auto report = check_positivity(t, w);
  if (!report.holds()) {
    throw PositivityError("density ratio: target levels without source rows: " + report.describe());
  }
  double ns = 0.0;
  double nt = 0.0;
  for (std::size_t v = 0; v < report.source_counts.size(); ++v) {
    ns += report.source_counts[v];
    nt += report.target_counts[v];
  }
  if (ns == 0.0 || nt == 0.0) throw EstimationError("density ratio: empty source or target sample");
  DensityRatioModel m;
  m.method = DensityMethod::discrete_ratio;
  m.by_v.assign(report.source_counts.size(), 0.0);
  for (std::size_t v = 0; v < m.by_v.size(); ++v) {
    if (report.target_counts[v] > 0.0) m.by_v[v] = (ns / nt) * (report.target_counts[v] / report.source_counts[v]);
  }
  return m;
}

struct LogisticOptions {
  int max_iter = 100;
  double tol = 1e-10;
  /// Separation is declared once any |beta_j| exceeds this.
  double separation_bound = 30.0;
};

/// Logistic regression of S on the main-effect design of V with fixed offset
/// log(n_s / n_t), fitted by Newton-Raphson (IRLS). The ratio is
/// w(v) = exp(-beta' d(v)).
inline DensityRatioModel fit_w_offset_logistic(const ObservationTable& t, LogisticOptions opts = {},
                                               RowWeights w = {}) {
  const auto& layout = t.layout();
  const auto& schema = t.schema();
  const auto report = check_positivity(t, w);
  if (!report.holds()) {
    throw PositivityError("density ratio: target levels without source rows: " + report.describe());
  }
  double ns = 0.0;
  double nt = 0.0;
  for (std::size_t v = 0; v < layout.v_count(); ++v) {
    ns += report.source_counts[v];
    nt += report.target_counts[v];
  }
  const detail::MainEffectsDesign design(schema, schema.shared_indices());
  const auto p = static_cast<Eigen::Index>(design.width);
  const auto nv = static_cast<Eigen::Index>(layout.v_count());
  Eigen::MatrixXd D(nv, p);
  for (Eigen::Index v = 0; v < nv; ++v) design.fill(layout.decode_v(static_cast<std::int32_t>(v)), D.row(v));
  Eigen::VectorXd s_count(nv);
  Eigen::VectorXd t_count(nv);
  for (Eigen::Index v = 0; v < nv; ++v) {
    s_count(v) = report.source_counts[static_cast<std::size_t>(v)];
    t_count(v) = report.target_counts[static_cast<std::size_t>(v)];
  }
  const Eigen::VectorXd total = s_count + t_count;
  const double offset = std::log(ns / nt);

  auto log_likelihood = [&](const Eigen::VectorXd& beta) {
    double ll = 0.0;
    const Eigen::VectorXd eta = (D * beta).array() + offset;
    for (Eigen::Index v = 0; v < nv; ++v) {
      // log p = -log(1 + e^-eta), log(1 - p) = -log(1 + e^eta)
      const double e = eta(v);
      const double log_p = -(e > 0 ? std::log1p(std::exp(-e)) : -e + std::log1p(std::exp(e)));
      const double log_q = -(e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e)));
      if (s_count(v) > 0) ll += s_count(v) * log_p;
      if (t_count(v) > 0) ll += t_count(v) * log_q;
    }
    return ll;
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double ll = log_likelihood(beta);
  int iter = 0;
  bool converged = false;
  while (iter < opts.max_iter) {
    ++iter;
    const Eigen::VectorXd eta = (D * beta).array() + offset;
    const Eigen::VectorXd prob = (1.0 + (-eta.array()).exp()).inverse().matrix();
    const Eigen::VectorXd grad = D.transpose() * (s_count - total.cwiseProduct(prob));
    const Eigen::VectorXd curvature = total.array() * prob.array() * (1.0 - prob.array());
    const Eigen::MatrixXd H = D.transpose() * curvature.asDiagonal() * D;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(H);
    if (qr.rank() < p) throw EstimationError("offset logistic: singular information matrix");
    beta += qr.solve(grad);
    if (beta.cwiseAbs().maxCoeff() > opts.separation_bound) {
      throw EstimationError("offset logistic: separation detected (|beta| > " +
                            std::to_string(opts.separation_bound) + ")");
    }
    const double next = log_likelihood(beta);
    const double change = std::fabs(next - ll) / (std::fabs(ll) + 1e-300);
    ll = next;
    if (change < opts.tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw EstimationError("offset logistic: no convergence after " + std::to_string(opts.max_iter) + " iterations");
  }
  DensityRatioModel m;
  m.method = DensityMethod::offset_logistic;
  m.terms = design.terms;
  m.beta.assign(beta.data(), beta.data() + beta.size());
  m.offset = offset;
  m.iterations = iter;
  m.by_v.resize(layout.v_count());
  const Eigen::VectorXd lin = D * beta;
  for (Eigen::Index v = 0; v < nv; ++v) m.by_v[static_cast<std::size_t>(v)] = std::exp(-lin(v));
  return m;
}

// ---------------------------------------------------------------------------
// Tilted moments (continuous outcomes)

inline TiltedMomentModel fit_tilted_moments(const ObservationTable& t, int arm, double gamma, RowWeights w = {}) {
  const auto& layout = t.layout();
  const std::size_t nx = layout.x_count();
  std::vector<double> any_arm(nx, 0.0);
  std::vector<double> count(nx, 0.0);
  std::vector<double> num(nx, 0.0);
  std::vector<double> den(nx, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0 || !t.is_source(i)) continue;
    const auto x = static_cast<std::size_t>(t.x_stratum(i));
    any_arm[x] += wi;
    if (t.treatment(i) != arm) continue;
    const double y = t.outcome(i);
    const double e = std::exp(gamma * y);
    count[x] += wi;
    num[x] += wi * e * y;
    den[x] += wi * e;
  }
  TiltedMomentModel m;
  m.arm = arm;
  m.gamma = gamma;
  m.numerator_x.assign(nx, kUndefined);
  m.denominator_x.assign(nx, kUndefined);
  for (std::size_t x = 0; x < nx; ++x) {
    if (any_arm[x] == 0.0) continue;
    if (count[x] == 0.0) {
      throw EstimationError("tilted moments: stratum (" + layout.x_label(static_cast<std::int32_t>(x)) +
                            ") has no rows with treatment " + std::to_string(arm));
    }
    m.numerator_x[x] = num[x] / count[x];
    m.denominator_x[x] = den[x] / count[x];
  }
  const std::size_t nv = layout.v_count();
  std::vector<double> total(nv, 0.0);
  std::vector<double> target(nv, 0.0);
  std::vector<double> num_v(nv, 0.0);
  std::vector<double> den_v(nv, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0) continue;
    const auto v = static_cast<std::size_t>(t.v_stratum(i));
    if (!t.is_source(i)) {
      target[v] += wi;
      continue;
    }
    const auto x = static_cast<std::size_t>(t.x_stratum(i));
    total[v] += wi;
    num_v[v] += wi * m.numerator_x[x];
    den_v[v] += wi * m.denominator_x[x];
  }
  m.numerator_v.assign(nv, kUndefined);
  m.denominator_v.assign(nv, kUndefined);
  for (std::size_t v = 0; v < nv; ++v) {
    if (total[v] > 0.0) {
      m.numerator_v[v] = num_v[v] / total[v];
      m.denominator_v[v] = den_v[v] / total[v];
    } else if (target[v] > 0.0) {
      throw PositivityError("tilted moments: target level (" + layout.v_label(static_cast<std::int32_t>(v)) +
                            ") has no source rows");
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline nlohmann::json stratum_values(const std::vector<double>& values, bool by_x, const StrataLayout& layout) {
  nlohmann::json out = nlohmann::json::object();
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (std::isnan(values[k])) continue;
    const auto code = static_cast<std::int32_t>(k);
    out[by_x ? layout.x_label(code) : layout.v_label(code)] = values[k];
  }
  return out;
}

inline nlohmann::json clip_json(const std::optional<ClipBounds>& c) {
  if (!c) return nullptr;
  return nlohmann::json::array({c->lo, c->hi});
}

}  // namespace detail

inline nlohmann::json to_json(const PropensityModel& m, const StrataLayout& layout) {
  return {{"model", "propensity"},
          {"method", m.origin == PropensityModel::Origin::known ? "known" : "frequency"},
          {"clip", detail::clip_json(m.clip)},
          {"values", detail::stratum_values(m.by_x, true, layout)}};
}

inline nlohmann::json to_json(const OutcomeModel& m, const StrataLayout& layout) {
  nlohmann::json j{{"model", "outcome"},
                   {"arm", m.arm},
                   {"method", to_string(m.method)},
                   {"values", detail::stratum_values(m.by_x, true, layout)}};
  if (m.method == MuMethod::wls_ipw) {
    j["saturated"] = m.saturated;
    nlohmann::json coef = nlohmann::json::object();
    for (std::size_t k = 0; k < m.terms.size(); ++k) coef[m.terms[k]] = m.coefficients[k];
    j["coefficients"] = coef;
  }
  return j;
}

inline nlohmann::json to_json(const SharedOutcomeModel& m, const StrataLayout& layout) {
  return {{"model", "shared_outcome"}, {"arm", m.arm}, {"values", detail::stratum_values(m.by_v, false, layout)}};
}

inline nlohmann::json to_json(const DensityRatioModel& m, const StrataLayout& layout) {
  nlohmann::json j{{"model", "density_ratio"},
                   {"method", to_string(m.method)},
                   {"clip", detail::clip_json(m.clip)},
                   {"values", detail::stratum_values(m.by_v, false, layout)}};
  if (m.method == DensityMethod::offset_logistic) {
    nlohmann::json coef = nlohmann::json::object();
    for (std::size_t k = 0; k < m.terms.size(); ++k) coef[m.terms[k]] = m.beta[k];
    j["coefficients"] = coef;
    j["offset"] = m.offset;
  }
  return j;
}

/// Reads a propensity document (as written by to_json) as design-supplied
/// probabilities. Strata missing from "values" stay undefined.
inline PropensityModel propensity_from_json(const nlohmann::json& j, const StrataLayout& layout) {
  std::vector<double> by_x(layout.x_count(), kUndefined);
  try {
    const auto& values = j.at("values");
    for (std::size_t x = 0; x < layout.x_count(); ++x) {
      const auto label = layout.x_label(static_cast<std::int32_t>(x));
      if (values.contains(label)) by_x[x] = values.at(label).get<double>();
    }
    std::size_t matched = 0;
    for (double p : by_x) matched += std::isnan(p) ? 0 : 1;
    if (matched != values.size()) throw ConfigError("propensity document names strata outside the schema");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("propensity document: ") + e.what());
  }
  return known_propensity(std::move(by_x));
}

}  // namespace tate
