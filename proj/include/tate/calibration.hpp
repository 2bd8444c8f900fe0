#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tate/data_model.hpp"
#include "tate/eif_estimator.hpp"
#include "tate/errors.hpp"
#include "tate/nuisance.hpp"
#include "tate/or_estimator.hpp"
#include "tate/report.hpp"
#include "tate/rng.hpp"
#include "tate/tilt.hpp"

namespace tate {

/// Splits the source rows by the level of one categorical column (covariate
/// or metadata): rows whose level is listed form s1, the rest s2.
struct PartitionSpec {
  std::string column;
  std::vector<std::string> s1_levels;
};

struct SourcePartition {
  std::vector<std::size_t> s1;
  std::vector<std::size_t> s2;
};

inline SourcePartition partition_source(const ObservationTable& t, const PartitionSpec& spec) {
  const auto& schema = t.schema();
  const int cov = schema.covariate_index(spec.column);
  const int meta = cov < 0 ? schema.metadata_index(spec.column) : -1;
  if (cov < 0 && meta < 0) throw ConfigError("partition: unknown column '" + spec.column + "'");
  const auto& col = cov >= 0 ? schema.covariates[static_cast<std::size_t>(cov)]
                             : schema.metadata[static_cast<std::size_t>(meta)];
  if (spec.s1_levels.empty()) throw ConfigError("partition: no s1 levels given");
  std::vector<bool> in_s1(col.levels.size(), false);
  for (const auto& level : spec.s1_levels) {
    const int code = col.code_of(level);
    if (code < 0) throw ConfigError("partition: column '" + spec.column + "' has no level '" + level + "'");
    in_s1[static_cast<std::size_t>(code)] = true;
  }
  SourcePartition p;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t.is_source(i)) continue;
    const auto code = cov >= 0 ? t.covariate(static_cast<std::size_t>(cov), i)
                               : t.metadata(static_cast<std::size_t>(meta), i);
    if (code < 0) throw ConfigError("partition: source row " + std::to_string(i) + " has no '" + spec.column + "' value");
    (in_s1[static_cast<std::size_t>(code)] ? p.s1 : p.s2).push_back(i);
  }
  if (p.s1.empty()) throw ConfigError("partition: s1 is empty");
  if (p.s2.empty()) throw ConfigError("partition: s2 is empty");
  return p;
}

// ---------------------------------------------------------------------------
// Direct interval on a proxy target

enum class StandardCiMethod { diff_in_means, wls_covariates };

inline const char* to_string(StandardCiMethod m) {
  return m == StandardCiMethod::diff_in_means ? "diff-in-means" : "wls-covariates";
}

struct StandardCiOptions {
  StandardCiMethod method = StandardCiMethod::diff_in_means;
  /// wls-covariates: covariate names entering the regression (empty: all).
  std::vector<std::string> covariates;
  /// wls-covariates: weight rows by 1 / P(A | X) (frequency estimate over
  /// the given rows).
  bool inverse_propensity = true;
};

struct StandardCi {
  double estimate = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;

  Interval interval() const noexcept { return {lo, hi}; }
};

/// Wald interval for the average effect among the given source rows.
inline StandardCi standard_ci(const ObservationTable& t, std::span<const std::size_t> rows, double alpha,
                              const StandardCiOptions& opts = {}) {
  validate_alpha(alpha);
  double n[2] = {0.0, 0.0};
  for (std::size_t r : rows) {
    if (!t.is_source(r)) throw ConfigError("standard ci: proxy target rows must carry treatment and outcome");
    n[t.treatment(r)] += 1.0;
  }
  if (n[0] < 1.0 || n[1] < 1.0) throw EstimationError("standard ci: proxy target has a single treatment arm");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  StandardCi ci;

  if (opts.method == StandardCiMethod::diff_in_means) {
    if (n[0] < 2.0 || n[1] < 2.0) throw EstimationError("standard ci: each arm needs at least two rows");
    double sum[2] = {0.0, 0.0};
    for (std::size_t r : rows) sum[t.treatment(r)] += t.outcome(r);
    const double mean[2] = {sum[0] / n[0], sum[1] / n[1]};
    double ss[2] = {0.0, 0.0};
    for (std::size_t r : rows) {
      const int a = t.treatment(r);
      ss[a] += (t.outcome(r) - mean[a]) * (t.outcome(r) - mean[a]);
    }
    ci.estimate = mean[1] - mean[0];
    ci.se = std::sqrt(ss[1] / (n[1] - 1.0) / n[1] + ss[0] / (n[0] - 1.0) / n[0]);
  } else {
    const auto& schema = t.schema();
    std::vector<int> cols;
    if (opts.covariates.empty()) {
      cols = detail::all_columns(schema);
    } else {
      for (const auto& name : opts.covariates) {
        const int c = schema.covariate_index(name);
        if (c < 0) throw ConfigError("standard ci: unknown covariate '" + name + "'");
        cols.push_back(c);
      }
    }
    const detail::MainEffectsDesign design(schema, cols);
    // Column 0 intercept, column 1 treatment, then covariate dummies.
    const auto p = static_cast<Eigen::Index>(design.width + 1);
    std::vector<double> weight(rows.size(), 1.0);
    if (opts.inverse_propensity) {
      std::vector<double> total(t.layout().x_count(), 0.0);
      std::vector<double> treated(t.layout().x_count(), 0.0);
      for (std::size_t r : rows) {
        total[static_cast<std::size_t>(t.x_stratum(r))] += 1.0;
        treated[static_cast<std::size_t>(t.x_stratum(r))] += t.treatment(r);
      }
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto x = static_cast<std::size_t>(t.x_stratum(rows[k]));
        const double pi = treated[x] / total[x];
        if (pi <= 0.0 || pi >= 1.0) throw EstimationError("standard ci: a covariate stratum has a single arm");
        weight[k] = 1.0 / (t.treatment(rows[k]) == 1 ? pi : 1.0 - pi);
      }
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd X(m, p);
    Eigen::VectorXd y(m);
    Eigen::RowVectorXd d(static_cast<Eigen::Index>(design.width));
    std::vector<std::int16_t> codes(cols.size());
    for (Eigen::Index k = 0; k < m; ++k) {
      const std::size_t r = rows[static_cast<std::size_t>(k)];
      for (std::size_t c = 0; c < cols.size(); ++c) codes[c] = t.covariate(static_cast<std::size_t>(cols[c]), r);
      design.fill(codes, d);
      const double sw = std::sqrt(weight[static_cast<std::size_t>(k)]);
      X(k, 0) = sw;
      X(k, 1) = sw * t.treatment(r);
      X.row(k).tail(p - 2) = sw * d.tail(p - 2);
      y(k) = sw * t.outcome(r);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() < p) throw EstimationError("standard ci: singular design in the covariate regression");
    if (m <= p) throw EstimationError("standard ci: too few rows for the covariate regression");
    const Eigen::VectorXd beta = qr.solve(y);
    const double sigma2 = (y - X * beta).squaredNorm() / static_cast<double>(m - p);
    const Eigen::MatrixXd XtX = X.transpose() * X;
    const Eigen::MatrixXd inv = XtX.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    ci.estimate = beta(1);
    ci.se = std::sqrt(std::max(0.0, sigma2 * inv(1, 1)));
  }
  ci.lo = ci.estimate - z * ci.se;
  ci.hi = ci.estimate + z * ci.se;
  return ci;
}

// ---------------------------------------------------------------------------
// Transported intervals

/// Interval about `point` with each half-width multiplied by `factor`.
inline Interval rescale(double point, Interval ci, double factor) {
  return {point - factor * (point - ci.lo), point + factor * (ci.hi - point)};
}

/// sqrt(|proxy target| / n_t of the real analysis).
inline double rescale_factor(std::size_t proxy_target, std::size_t original_target) {
  if (original_target == 0) throw ConfigError("calibration: original target size must be positive");
  return std::sqrt(static_cast<double>(proxy_target) / static_cast<double>(original_target));
}

struct EstimatorOptions {
  InferenceMethod method = InferenceMethod::or_bootstrap;
  double alpha = 0.05;
  BootstrapOptions bootstrap;  // seed is overwritten by callers that derive one
  OrOptions or_options;
  EifOptions eif_options;
  unsigned threads = 1;
};

/// TATE reports at every grid point with the chosen pipeline.
inline std::vector<GridEstimate> estimate_grid(const ObservationTable& t, const GammaGrid& grid,
                                               const EstimatorOptions& opts, std::uint64_t seed) {
  if (opts.method == InferenceMethod::or_bootstrap) {
    auto b = opts.bootstrap;
    b.alpha = opts.alpha;
    b.seed = seed;
    b.threads = opts.threads;
    return grid_estimates(t, grid, b, opts.or_options);
  }
  return eif_grid_estimates(t, grid, opts.alpha, seed, opts.eif_options, opts.threads);
}

/// TATE intervals at each grid point for `proxy` (proxy source rows as
/// source, proxy target rows as target), widened or narrowed by
/// sqrt(n_t(proxy) / n_t_original).
inline std::vector<Interval> transported_ci_grid(const ObservationTable& proxy, const GammaGrid& grid,
                                                 const EstimatorOptions& opts, std::size_t n_t_original,
                                                 std::uint64_t seed) {
  const double f = rescale_factor(proxy.n_target(), n_t_original);
  const auto reports = estimate_grid(proxy, grid, opts, seed);
  std::vector<Interval> out;
  out.reserve(reports.size());
  for (const auto& r : reports) out.push_back(rescale(r.tate.point, r.tate.interval(), f));
  return out;
}

inline std::vector<bool> overlap_region(std::span<const Interval> transported, const Interval& standard) {
  std::vector<bool> mask(transported.size());
  for (std::size_t i = 0; i < transported.size(); ++i) mask[i] = overlaps(transported[i], standard);
  return mask;
}

// ---------------------------------------------------------------------------
// Calibration region

struct CalibrationOptions {
  EstimatorOptions estimator;
  StandardCiOptions standard;
  /// Compute the direct interval on the whole proxy target instead of the
  /// ratio-matched subsample.
  bool standard_on_full_partition = false;
};

/// One transport direction: proxy source -> proxy target.
struct CalibrationDirection {
  std::size_t proxy_source = 0;  // rows after ratio matching
  std::size_t proxy_target = 0;
  double factor = 1.0;
  StandardCi standard;
  std::vector<Interval> transported;
  std::vector<bool> overlap;
};

struct CalibrationRegion {
  GammaGrid grid;
  std::vector<SensitivityPair> points;
  std::vector<bool> c1;
  std::vector<bool> c2;
  std::vector<bool> c;
  CalibrationDirection forward;   // s1 -> s2
  CalibrationDirection backward;  // s2 -> s1

  std::size_t size() const noexcept { return c.size(); }
  bool contains(SensitivityPair g) const {
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (std::fabs(points[i].gamma0 - g.gamma0) < 1e-12 && std::fabs(points[i].gamma1 - g.gamma1) < 1e-12) {
        return c[i];
      }
    }
    return false;
  }
};

/// Uniform subsample without replacement, returned in input order.
inline std::vector<std::size_t> subsample(std::span<const std::size_t> rows, std::size_t k, rng::Engine& eng) {
  std::vector<std::size_t> pos(rows.size());
  std::iota(pos.begin(), pos.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pos.size() - 1);
    std::swap(pos[i], pos[pick(eng)]);
  }
  pos.resize(k);
  std::sort(pos.begin(), pos.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = rows[pos[i]];
  return out;
}

namespace detail {

/// Shrinks whichever part is too large so |source| / |target| = n_s / n_t.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> ratio_match(
    std::span<const std::size_t> source, std::span<const std::size_t> target, double ratio, rng::Engine& eng) {
  const double ns = static_cast<double>(source.size());
  const double nt = static_cast<double>(target.size());
  std::vector<std::size_t> s(source.begin(), source.end());
  std::vector<std::size_t> t(target.begin(), target.end());
  if (ns > ratio * nt) {
    const double want = std::round(ratio * nt);
    if (want < 1.0) throw ConfigError("calibration: partition too small to ratio-match (proxy source size < 1)");
    s = subsample(source, static_cast<std::size_t>(want), eng);
  } else if (ns < ratio * nt) {
    const double want = std::round(ns / ratio);
    if (want < 1.0) throw ConfigError("calibration: partition too small to ratio-match (proxy target size < 1)");
    t = subsample(target, static_cast<std::size_t>(want), eng);
  }
  return {std::move(s), std::move(t)};
}

inline CalibrationDirection calibrate_direction(const ObservationTable& t, std::span<const std::size_t> from,
                                                std::span<const std::size_t> to, const GammaGrid& grid,
                                                const CalibrationOptions& opts, std::uint64_t seed) {
  // Seeded by the proxy source's first row, so relabeling s1 and s2 leaves
  // each direction's draws unchanged.
  const std::uint64_t direction = from.front();
  const double ratio = static_cast<double>(t.n_source()) / static_cast<double>(t.n_target());
  auto eng = rng::engine(seed, rng::Stream::calibration, direction);
  auto [src, tgt] = ratio_match(from, to, ratio, eng);

  CalibrationDirection d;
  d.proxy_source = src.size();
  d.proxy_target = tgt.size();
  d.standard = standard_ci(t, opts.standard_on_full_partition ? to : std::span<const std::size_t>(tgt),
                           opts.estimator.alpha, opts.standard);

  std::vector<std::size_t> rows = src;
  rows.insert(rows.end(), tgt.begin(), tgt.end());
  std::vector<Role> roles(src.size(), Role::source);
  roles.resize(rows.size(), Role::target);
  const auto proxy = t.select_as(rows, roles);
  d.factor = rescale_factor(proxy.n_target(), t.n_target());
  d.transported = transported_ci_grid(proxy, grid, opts.estimator, t.n_target(),
                                      rng::derive_seed(seed, rng::Stream::subsample, direction));
  d.overlap = overlap_region(d.transported, d.standard.interval());
  return d;
}

}  // namespace detail

/// Transports s1 -> s2 and s2 -> s1, keeps grid points where the transported
/// and direct intervals overlap in each direction, and intersects.
inline CalibrationRegion calibrate(const ObservationTable& t, const PartitionSpec& spec, const GammaGrid& grid,
                                   const CalibrationOptions& opts, std::uint64_t seed) {
  grid.validate();
  const auto part = partition_source(t, spec);
  CalibrationRegion r;
  r.grid = grid;
  r.points = grid.points();
  r.forward = detail::calibrate_direction(t, part.s1, part.s2, grid, opts, seed);
  r.backward = detail::calibrate_direction(t, part.s2, part.s1, grid, opts, seed);
  r.c1 = r.forward.overlap;
  r.c2 = r.backward.overlap;
  r.c.resize(r.c1.size());
  for (std::size_t i = 0; i < r.c.size(); ++i) r.c[i] = r.c1[i] && r.c2[i];
  return r;
}

// ---------------------------------------------------------------------------
// Verdicts

enum class Direction { positive_only, negative_only, both_directions, neither };

inline const char* to_string(Direction d) {
  switch (d) {
    case Direction::positive_only:
      return "Positive Only";
    case Direction::negative_only:
      return "Negative Only";
    case Direction::both_directions:
      return "Both Directions";
    case Direction::neither:
      break;
  }
  return "Neither Direction";
}

struct SensitivityVerdict {
  Direction direction = Direction::neither;
  /// Smallest exp(|gamma1 - gamma0|) over significant points of C.
  std::optional<double> min_tilt;
  std::optional<SensitivityPair> min_tilt_at;
  bool empty_region = false;

  nlohmann::json to_json() const {
    nlohmann::json j{{"direction", to_string(direction)}, {"empty_region", empty_region}};
    j["min_tilt"] = min_tilt ? nlohmann::json(*min_tilt) : nlohmann::json(nullptr);
    if (min_tilt_at) j["min_tilt_at"] = {{"gamma0", min_tilt_at->gamma0}, {"gamma1", min_tilt_at->gamma1}};
    return j;
  }
};

/// |gamma1 - gamma0| snapped to the nearest whole number of grid steps.
inline double grid_tilt_exponent(SensitivityPair g, std::optional<double> step) {
  const double d = std::fabs(g.gamma1 - g.gamma0);
  if (!step) return d;
  return std::round(d / *step) * *step;
}

inline SensitivityVerdict classify(std::span<const GridEstimate> reports, const CalibrationRegion& region) {
  if (reports.size() != region.c.size()) throw ConfigError("classify: reports and region use different grids");
  SensitivityVerdict v;
  const auto step = region.grid.common_step();
  bool any_in_c = false;
  bool pos = false;
  bool neg = false;
  double best = 0.0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (!region.c[i]) continue;
    any_in_c = true;
    const auto& r = reports[i].tate;
    const bool p = r.significant_positive();
    const bool n = r.significant_negative();
    if (!p && !n) continue;
    pos = pos || p;
    neg = neg || n;
    const double e = grid_tilt_exponent(reports[i].gamma, step);
    if (!v.min_tilt_at || e < best) {
      best = e;
      v.min_tilt_at = reports[i].gamma;
    }
  }
  v.empty_region = !any_in_c;
  if (pos && neg) {
    v.direction = Direction::both_directions;
  } else if (pos) {
    v.direction = Direction::positive_only;
  } else if (neg) {
    v.direction = Direction::negative_only;
  }
  if (v.min_tilt_at) v.min_tilt = std::exp(best);
  return v;
}

}  // namespace tate
