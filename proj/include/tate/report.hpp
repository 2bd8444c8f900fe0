#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "tate/errors.hpp"
#include "tate/tilt.hpp"

namespace tate {

enum class Estimand { theta0, theta1, tate };
enum class InferenceMethod { or_bootstrap, eif_wald };

inline const char* to_string(Estimand e) {
  switch (e) {
    case Estimand::theta0: return "theta0";
    case Estimand::theta1: return "theta1";
    case Estimand::tate: return "tate";
  }
  return "?";
}

inline const char* to_string(InferenceMethod m) { return m == InferenceMethod::or_bootstrap ? "or-bootstrap" : "eif-wald"; }

/// Standard normal quantile.
inline double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline void validate_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 0.5)) throw ConfigError("alpha must lie in (0, 0.5)");
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Closed intervals overlap when they share at least one point.
inline bool overlaps(const Interval& a, const Interval& b) noexcept {
  return std::max(a.lo, b.lo) <= std::min(a.hi, b.hi);
}

struct EstimateReport {
  Estimand estimand = Estimand::tate;
  SensitivityPair gamma;
  double point = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double level = 0.95;
  InferenceMethod method = InferenceMethod::or_bootstrap;
  std::size_t B = 0;           // or-bootstrap: replicates requested
  std::size_t failed = 0;      // or-bootstrap: replicates that could not be fitted
  int K = 0;                   // eif-wald: folds
  std::optional<double> sigma2;
  std::uint64_t seed = 0;

  Interval interval() const noexcept { return {lo, hi}; }

  /// Wald-equivalent standard error. For percentile intervals this is the
  /// half-width divided by the normal quantile.
  double standard_error() const {
    return (hi - lo) / (2.0 * normal_quantile(0.5 + level / 2.0));
  }

  bool significant_positive() const noexcept { return lo > 0.0; }
  bool significant_negative() const noexcept { return hi < 0.0; }

  nlohmann::json to_json() const {
    nlohmann::json j{{"estimand", to_string(estimand)},
                     {"gamma0", gamma.gamma0},
                     {"gamma1", gamma.gamma1},
                     {"point", point},
                     {"lo", lo},
                     {"hi", hi},
                     {"level", level},
                     {"method", to_string(method)},
                     {"seed", seed}};
    if (method == InferenceMethod::or_bootstrap) {
      j["B"] = B;
      j["failed_replicates"] = failed;
    } else {
      j["K"] = K;
      j["sigma2"] = sigma2.value_or(0.0);
    }
    return j;
  }
};

}  // namespace tate
