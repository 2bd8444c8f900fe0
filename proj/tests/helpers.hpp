#pragma once

#include <initializer_list>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "tate/tate.hpp"

namespace testing_support {

using tate::CovariateSchema;
using tate::ObservationTable;
using tate::Role;

/// gender {F, M} shared; age {young, old} source only.
inline CovariateSchema two_by_two_schema() {
  CovariateSchema s;
  s.covariates = {{"gender", {"F", "M"}}, {"age", {"young", "old"}}};
  s.shared = {"gender"};
  return s;
}

/// One covariate g {F, M}, shared.
inline CovariateSchema single_schema() {
  CovariateSchema s;
  s.covariates = {{"g", {"F", "M"}}};
  s.shared = {"g"};
  return s;
}

struct SourceRow {
  std::vector<std::int16_t> x;
  int a;
  double y;
};

inline ObservationTable make_table(const CovariateSchema& schema, const std::vector<SourceRow>& source,
                                   const std::vector<std::vector<std::int16_t>>& target) {
  ObservationTable::Builder b(schema);
  const std::vector<std::int16_t> meta(schema.metadata.size(), ObservationTable::kMissing);
  for (const auto& r : source) b.add_row(Role::source, r.x, meta, r.a, r.y);
  for (const auto& v : target) {
    std::vector<std::int16_t> x(schema.covariates.size(), ObservationTable::kMissing);
    for (std::size_t i = 0; i < v.size(); ++i) x[i] = v[i];
    b.add_row(Role::target, x, meta, -1, std::numeric_limits<double>::quiet_NaN());
  }
  return b.build();
}

/// Source rows with every (x, a, y) combination repeated `reps` times, so all
/// nuisance fits are defined, and a target with `target_reps` rows per V level.
inline ObservationTable full_support_table(int reps = 3, int target_reps = 5) {
  const auto schema = two_by_two_schema();
  std::vector<SourceRow> src;
  for (std::int16_t g = 0; g < 2; ++g) {
    for (std::int16_t age = 0; age < 2; ++age) {
      for (int a = 0; a < 2; ++a) {
        for (int k = 0; k < reps; ++k) {
          src.push_back({{g, age}, a, 1.0});
          src.push_back({{g, age}, a, static_cast<double>((g + age + a + k) % 2)});
        }
      }
    }
  }
  std::vector<std::vector<std::int16_t>> tgt;
  for (std::int16_t g = 0; g < 2; ++g) {
    for (int k = 0; k < target_reps + g; ++k) tgt.push_back({g});
  }
  return make_table(schema, src, tgt);
}

}  // namespace testing_support
