#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tate/errors.hpp"

namespace tate {

/// Log odds-ratio shifts (gamma0, gamma1) of the control and treated
/// counterfactual outcomes between target and source. (0, 0) is
/// transportability.
struct SensitivityPair {
  double gamma0 = 0.0;
  double gamma1 = 0.0;

  double for_arm(int arm) const noexcept { return arm == 1 ? gamma1 : gamma0; }
  /// exp(|gamma1 - gamma0|), the odds-ratio scale reported for a pair.
  double tilt_magnitude() const noexcept { return std::exp(std::fabs(gamma1 - gamma0)); }

  friend bool operator==(const SensitivityPair&, const SensitivityPair&) = default;
};

/// exp(g) rho / (exp(g) rho + 1 - rho): the probability rho moved by a log
/// odds ratio of g. Endpoints 0 and 1 are fixed points, as is every rho at g = 0.
inline double tilt_binary(double rho, double gamma) noexcept {
  if (rho <= 0.0 || rho >= 1.0 || gamma == 0.0) return rho;
  if (gamma > 0.0) {
    return rho / (rho + std::exp(-gamma) * (1.0 - rho));
  }
  const double e = std::exp(gamma);
  return e * rho / (e * rho + 1.0 - rho);
}

/// d tilt / d rho = exp(g) / (exp(g) rho + 1 - rho)^2.
inline double tilt_slope(double rho, double gamma) noexcept {
  if (gamma > 0.0) {
    const double d = rho + std::exp(-gamma) * (1.0 - rho);
    return std::exp(-gamma) / (d * d);
  }
  const double e = std::exp(gamma);
  const double d = e * rho + 1.0 - rho;
  return e / (d * d);
}

/// Inclusive arithmetic progression lo, lo + step, ..., hi.
struct GammaRange {
  double lo = 0.0;
  double hi = 0.0;
  double step = 1.0;

  std::size_t size() const {
    return static_cast<std::size_t>(std::llround((hi - lo) / step)) + 1;
  }

  std::vector<double> values() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      double v = lo + static_cast<double>(i) * step;
      // Land exactly on the transportability point when the grid crosses it.
      if (std::fabs(v) < 1e-9 * step) v = 0.0;
      out[i] = v;
    }
    return out;
  }
};

/// Row-major (gamma0 outer, gamma1 inner) grid of sensitivity pairs.
struct GammaGrid {
  GammaRange gamma0{-0.05, 0.05, 0.002};
  GammaRange gamma1{-0.05, 0.05, 0.002};

  static GammaGrid single(SensitivityPair p) { return {{p.gamma0, p.gamma0, 1.0}, {p.gamma1, p.gamma1, 1.0}}; }

  /// Symmetric grid [-half, half] with the same step on both axes.
  static GammaGrid symmetric(double half_width, double step) {
    return {{-half_width, half_width, step}, {-half_width, half_width, step}};
  }

  void validate() const {
    for (const auto* r : {&gamma0, &gamma1}) {
      if (!(r->step > 0.0) || !std::isfinite(r->lo) || !std::isfinite(r->hi)) {
        throw ConfigError("gamma grid: step must be positive and bounds finite");
      }
      if (r->lo > r->hi) throw ConfigError("gamma grid: lo exceeds hi");
      const double span = (r->hi - r->lo) / r->step;
      if (std::fabs(span - std::round(span)) > 1e-6) {
        throw ConfigError("gamma grid: (hi - lo) must be a whole number of steps");
      }
    }
  }

  /// Grids used for sensitivity analysis must contain (0, 0).
  void validate_contains_origin() const {
    validate();
    if (gamma0.lo > 0.0 || gamma0.hi < 0.0 || gamma1.lo > 0.0 || gamma1.hi < 0.0) {
      throw ConfigError("gamma grid: must satisfy lo <= 0 <= hi on both axes");
    }
  }

  std::size_t size() const { return gamma0.size() * gamma1.size(); }

  std::vector<SensitivityPair> points() const {
    std::vector<SensitivityPair> out;
    out.reserve(size());
    for (double g0 : gamma0.values()) {
      for (double g1 : gamma1.values()) out.push_back({g0, g1});
    }
    return out;
  }

  /// Shared step, when both axes use the same one.
  std::optional<double> common_step() const {
    if (gamma0.step == gamma1.step) return gamma0.step;
    return std::nullopt;
  }

  nlohmann::json to_json() const {
    return {{"gamma0", {gamma0.lo, gamma0.hi, gamma0.step}}, {"gamma1", {gamma1.lo, gamma1.hi, gamma1.step}}};
  }

  static GammaGrid from_json(const nlohmann::json& j) {
    auto range = [](const nlohmann::json& a) {
      if (!a.is_array() || a.size() != 3) throw ConfigError("gamma grid: expected [lo, hi, step]");
      return GammaRange{a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
    };
    GammaGrid g{range(j.at("gamma0")), range(j.at("gamma1"))};
    g.validate();
    return g;
  }
};

/// Difference, risk ratio and odds ratio of two target means. Ratios are
/// absent when a denominator vanishes.
struct EffectMeasures {
  double difference = 0.0;
  std::optional<double> risk_ratio;
  std::optional<double> odds_ratio;
};

inline EffectMeasures effect_measures(double theta1, double theta0) {
  EffectMeasures m;
  m.difference = theta1 - theta0;
  if (theta0 != 0.0) m.risk_ratio = theta1 / theta0;
  if (theta0 != 0.0 && theta0 != 1.0 && theta1 != 0.0 && theta1 != 1.0) {
    m.odds_ratio = (theta1 / (1.0 - theta1)) / (theta0 / (1.0 - theta0));
  }
  return m;
}

}  // namespace tate
