#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tate/csv.hpp"
#include "tate/errors.hpp"
#include "tate/rng.hpp"

namespace tate {

enum class OutcomeKind { binary, continuous };
enum class Role : std::uint8_t { target = 0, source = 1 };

/// Per-row frequency weights. An empty span means every row has weight one;
/// a zero weight removes the row. Fits, folds and bootstrap replicates are
/// all expressed as weights over one immutable table.
using RowWeights = std::span<const double>;

inline double weight_at(RowWeights w, std::size_t i) noexcept { return w.empty() ? 1.0 : w[i]; }

struct CategoricalColumn {
  std::string name;
  std::vector<std::string> levels;

  int code_of(std::string_view token) const {
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels[i] == token) return static_cast<int>(i);
    }
    return -1;
  }
};

/// Column layout of an analysis: the source covariates X, the shared subset V,
/// optional metadata columns (carried along for partitioning, never used as
/// covariates) and the treatment/outcome column names.
struct CovariateSchema {
  static constexpr std::string_view kRoleColumn = "s";

  std::vector<CategoricalColumn> covariates;
  std::vector<std::string> shared;
  std::vector<CategoricalColumn> metadata;
  std::string treatment = "a";
  std::string outcome = "y";
  OutcomeKind outcome_kind = OutcomeKind::binary;

  int covariate_index(std::string_view name) const {
    for (std::size_t i = 0; i < covariates.size(); ++i) {
      if (covariates[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  int metadata_index(std::string_view name) const {
    for (std::size_t i = 0; i < metadata.size(); ++i) {
      if (metadata[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  std::vector<int> shared_indices() const {
    std::vector<int> out;
    out.reserve(shared.size());
    for (const auto& name : shared) out.push_back(covariate_index(name));
    return out;
  }

  bool is_shared(int covariate) const {
    const auto& name = covariates.at(static_cast<std::size_t>(covariate)).name;
    return std::find(shared.begin(), shared.end(), name) != shared.end();
  }

  void validate() const {
    if (covariates.empty()) throw SchemaError("schema: at least one covariate is required");
    if (shared.empty()) throw SchemaError("schema: at least one shared covariate is required");
    std::vector<std::string> names{std::string(kRoleColumn), treatment, outcome};
    auto check_column = [&](const CategoricalColumn& c) {
      if (c.name.empty()) throw SchemaError("schema: empty column name");
      if (std::find(names.begin(), names.end(), c.name) != names.end()) {
        throw SchemaError("schema: duplicate column '" + c.name + "'");
      }
      names.push_back(c.name);
      if (c.levels.empty()) throw SchemaError("schema: column '" + c.name + "' declares no levels");
      if (c.levels.size() > 32000) throw SchemaError("schema: column '" + c.name + "' has too many levels");
      for (std::size_t i = 0; i < c.levels.size(); ++i) {
        if (c.levels[i].empty()) throw SchemaError("schema: column '" + c.name + "' has an empty level");
        for (std::size_t j = 0; j < i; ++j) {
          if (c.levels[i] == c.levels[j]) {
            throw SchemaError("schema: column '" + c.name + "' repeats level '" + c.levels[i] + "'");
          }
        }
      }
    };
    if (treatment == outcome || treatment == kRoleColumn || outcome == kRoleColumn) {
      throw SchemaError("schema: role, treatment and outcome columns must be distinct");
    }
    for (const auto& c : covariates) check_column(c);
    for (const auto& c : metadata) check_column(c);
    for (std::size_t i = 0; i < shared.size(); ++i) {
      if (covariate_index(shared[i]) < 0) {
        throw SchemaError("schema: shared covariate '" + shared[i] + "' is not a source covariate");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (shared[i] == shared[j]) throw SchemaError("schema: shared covariate '" + shared[i] + "' listed twice");
      }
    }
    double x_cells = 1.0;
    for (const auto& c : covariates) x_cells *= static_cast<double>(c.levels.size());
    if (x_cells > 1e7) throw SchemaError("schema: covariate strata exceed 10^7 cells");
  }

  /// Descriptor format:
  ///   {"covariates": [{"name": "gender", "levels": ["F", "M"]}, ...],
  ///    "shared": ["gender"], "metadata": [...], "treatment": "a",
  ///    "outcome": "y", "outcome_kind": "binary" | "continuous"}
  static CovariateSchema from_json(const nlohmann::json& j) {
    CovariateSchema s;
    try {
      auto read_columns = [](const nlohmann::json& arr, std::vector<CategoricalColumn>& out) {
        for (const auto& c : arr) {
          if (c.contains("type") && c.at("type").get<std::string>() != "categorical") {
            throw SchemaError("schema: column '" + c.at("name").get<std::string>() +
                              "' is not categorical; only discrete covariates are supported");
          }
          if (!c.contains("levels")) {
            throw SchemaError("schema: column '" + c.at("name").get<std::string>() + "' must declare its levels");
          }
          out.push_back({c.at("name").get<std::string>(), c.at("levels").get<std::vector<std::string>>()});
        }
      };
      read_columns(j.at("covariates"), s.covariates);
      s.shared = j.at("shared").get<std::vector<std::string>>();
      if (j.contains("metadata")) read_columns(j.at("metadata"), s.metadata);
      if (j.contains("treatment")) s.treatment = j.at("treatment").get<std::string>();
      if (j.contains("outcome")) s.outcome = j.at("outcome").get<std::string>();
      const std::string kind = j.value("outcome_kind", std::string("binary"));
      if (kind == "binary") {
        s.outcome_kind = OutcomeKind::binary;
      } else if (kind == "continuous") {
        s.outcome_kind = OutcomeKind::continuous;
      } else {
        throw SchemaError("schema: unknown outcome_kind '" + kind + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("schema: ") + e.what());
    }
    s.validate();
    return s;
  }

  nlohmann::json to_json() const {
    auto columns = [](const std::vector<CategoricalColumn>& cols) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& c : cols) arr.push_back({{"name", c.name}, {"levels", c.levels}});
      return arr;
    };
    nlohmann::json j;
    j["covariates"] = columns(covariates);
    j["shared"] = shared;
    if (!metadata.empty()) j["metadata"] = columns(metadata);
    j["treatment"] = treatment;
    j["outcome"] = outcome;
    j["outcome_kind"] = outcome_kind == OutcomeKind::binary ? "binary" : "continuous";
    return j;
  }
};

/// Mixed-radix stratum codes over X (all covariates) and V (shared ones).
class StrataLayout {
 public:
  explicit StrataLayout(const CovariateSchema& schema)
      : schema_(&schema), shared_(schema.shared_indices()) {
    x_count_ = 1;
    for (const auto& c : schema.covariates) x_count_ *= c.levels.size();
    v_count_ = 1;
    for (int c : shared_) v_count_ *= schema.covariates[static_cast<std::size_t>(c)].levels.size();
    x_to_v_.resize(x_count_);
    std::vector<std::int16_t> codes(schema.covariates.size());
    for (std::size_t x = 0; x < x_count_; ++x) {
      decode_x(static_cast<std::int32_t>(x), codes);
      x_to_v_[x] = v_code(codes);
    }
  }

  std::size_t x_count() const noexcept { return x_count_; }
  std::size_t v_count() const noexcept { return v_count_; }
  std::span<const int> shared_columns() const noexcept { return shared_; }

  /// -1 when any covariate code is missing.
  std::int32_t x_code(std::span<const std::int16_t> codes) const noexcept {
    std::int64_t code = 0;
    for (std::size_t c = 0; c < codes.size(); ++c) {
      if (codes[c] < 0) return -1;
      code = code * static_cast<std::int64_t>(schema_->covariates[c].levels.size()) + codes[c];
    }
    return static_cast<std::int32_t>(code);
  }

  std::int32_t v_code(std::span<const std::int16_t> codes) const noexcept {
    std::int64_t code = 0;
    for (int c : shared_) {
      const auto k = codes[static_cast<std::size_t>(c)];
      if (k < 0) return -1;
      code = code * static_cast<std::int64_t>(schema_->covariates[static_cast<std::size_t>(c)].levels.size()) + k;
    }
    return static_cast<std::int32_t>(code);
  }

  std::int32_t v_of_x(std::int32_t x) const { return x_to_v_.at(static_cast<std::size_t>(x)); }

  void decode_x(std::int32_t x, std::span<std::int16_t> codes) const {
    for (std::size_t c = schema_->covariates.size(); c-- > 0;) {
      const auto radix = static_cast<std::int32_t>(schema_->covariates[c].levels.size());
      codes[c] = static_cast<std::int16_t>(x % radix);
      x /= radix;
    }
  }

  /// Decoded level per shared covariate, in schema.shared order.
  std::vector<std::int16_t> decode_v(std::int32_t v) const {
    std::vector<std::int16_t> out(shared_.size());
    for (std::size_t k = shared_.size(); k-- > 0;) {
      const auto radix = static_cast<std::int32_t>(
          schema_->covariates[static_cast<std::size_t>(shared_[k])].levels.size());
      out[k] = static_cast<std::int16_t>(v % radix);
      v /= radix;
    }
    return out;
  }

  std::string x_label(std::int32_t x) const {
    std::vector<std::int16_t> codes(schema_->covariates.size());
    decode_x(x, codes);
    std::string out;
    for (std::size_t c = 0; c < codes.size(); ++c) {
      if (c) out += ',';
      out += schema_->covariates[c].name + '=' + schema_->covariates[c].levels[static_cast<std::size_t>(codes[c])];
    }
    return out;
  }

  std::string v_label(std::int32_t v) const {
    const auto codes = decode_v(v);
    std::string out;
    for (std::size_t k = 0; k < codes.size(); ++k) {
      const auto& col = schema_->covariates[static_cast<std::size_t>(shared_[k])];
      if (k) out += ',';
      out += col.name + '=' + col.levels[static_cast<std::size_t>(codes[k])];
    }
    return out;
  }

 private:
  const CovariateSchema* schema_;
  std::vector<int> shared_;
  std::size_t x_count_ = 0;
  std::size_t v_count_ = 0;
  std::vector<std::int32_t> x_to_v_;
};

/// Columnar, immutable observation table. Copies share storage.
class ObservationTable {
 public:
  static constexpr std::int16_t kMissing = -1;

  class Builder;

  const CovariateSchema& schema() const noexcept { return meta_->schema; }
  const StrataLayout& layout() const noexcept { return meta_->layout; }

  std::size_t size() const noexcept { return data_->role.size(); }
  std::size_t n_source() const noexcept { return data_->n_source; }
  std::size_t n_target() const noexcept { return data_->n_target; }

  bool is_source(std::size_t row) const noexcept { return data_->role[row] == Role::source; }
  Role role(std::size_t row) const noexcept { return data_->role[row]; }

  std::int16_t covariate(std::size_t column, std::size_t row) const noexcept {
    return data_->covariates[row * ncov() + column];
  }
  std::span<const std::int16_t> covariates(std::size_t row) const noexcept {
    return {data_->covariates.data() + row * ncov(), ncov()};
  }
  std::int16_t metadata(std::size_t column, std::size_t row) const noexcept {
    return data_->metadata[row * nmeta() + column];
  }

  /// -1 on target rows.
  int treatment(std::size_t row) const noexcept { return data_->treatment[row]; }
  /// NaN on target rows.
  double outcome(std::size_t row) const noexcept { return data_->outcome[row]; }

  /// -1 when some covariate is missing (only possible on target rows).
  std::int32_t x_stratum(std::size_t row) const noexcept { return data_->x_stratum[row]; }
  std::int32_t v_stratum(std::size_t row) const noexcept { return data_->v_stratum[row]; }

  std::vector<std::size_t> rows_with_role(Role r) const {
    std::vector<std::size_t> out;
    out.reserve(r == Role::source ? n_source() : n_target());
    for (std::size_t i = 0; i < size(); ++i) {
      if (data_->role[i] == r) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> source_rows() const { return rows_with_role(Role::source); }
  std::vector<std::size_t> target_rows() const { return rows_with_role(Role::target); }

  /// New table holding the given rows (repeats allowed) in the given order.
  ObservationTable select(std::span<const std::size_t> rows) const;

  /// New table from the given rows with the given roles. Rows assigned the
  /// target role keep only their shared covariates (and metadata); this is how
  /// part of a source sample is presented as a proxy target.
  ObservationTable select_as(std::span<const std::size_t> rows, std::span<const Role> roles) const;

  /// Weighted source and target totals.
  std::pair<double, double> role_totals(RowWeights w = {}) const {
    double s = 0.0;
    double t = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      const double wi = weight_at(w, i);
      (is_source(i) ? s : t) += wi;
    }
    return {s, t};
  }

 private:
  struct Meta {
    explicit Meta(CovariateSchema s) : schema(std::move(s)), layout(schema) {}
    Meta(const Meta&) = delete;
    Meta& operator=(const Meta&) = delete;
    CovariateSchema schema;
    StrataLayout layout;
  };
  struct Data {
    std::vector<Role> role;
    std::vector<std::int16_t> covariates;
    std::vector<std::int16_t> metadata;
    std::vector<std::int8_t> treatment;
    std::vector<double> outcome;
    std::vector<std::int32_t> x_stratum;
    std::vector<std::int32_t> v_stratum;
    std::size_t n_source = 0;
    std::size_t n_target = 0;
  };

  std::size_t ncov() const noexcept { return meta_->schema.covariates.size(); }
  std::size_t nmeta() const noexcept { return meta_->schema.metadata.size(); }

  std::shared_ptr<const Meta> meta_;
  std::shared_ptr<const Data> data_;
};

/// Row-at-a-time construction with full validation in build().
class ObservationTable::Builder {
 public:
  explicit Builder(CovariateSchema schema) : meta_(std::make_shared<const Meta>(std::move(schema))) {
    meta_->schema.validate();
    data_ = std::make_shared<Data>();
  }

  explicit Builder(std::shared_ptr<const Meta> meta) : meta_(std::move(meta)), data_(std::make_shared<Data>()) {}

  const CovariateSchema& schema() const noexcept { return meta_->schema; }

  void reserve(std::size_t n) {
    data_->role.reserve(n);
    data_->covariates.reserve(n * meta_->schema.covariates.size());
    data_->metadata.reserve(n * meta_->schema.metadata.size());
    data_->treatment.reserve(n);
    data_->outcome.reserve(n);
  }

  /// Codes are level indices, or kMissing. treatment -1 and NaN outcome mean
  /// missing.
  Builder& add_row(Role role, std::span<const std::int16_t> covariates, std::span<const std::int16_t> metadata,
                   int treatment, double outcome) {
    const auto& s = meta_->schema;
    const std::size_t row = data_->role.size();
    if (covariates.size() != s.covariates.size() || metadata.size() != s.metadata.size()) {
      throw SchemaError("row " + std::to_string(row + 1) + ": wrong number of columns");
    }
    data_->role.push_back(role);
    data_->covariates.insert(data_->covariates.end(), covariates.begin(), covariates.end());
    data_->metadata.insert(data_->metadata.end(), metadata.begin(), metadata.end());
    data_->treatment.push_back(static_cast<std::int8_t>(treatment));
    data_->outcome.push_back(outcome);
    return *this;
  }

  Builder& add_row(Role role, std::initializer_list<std::int16_t> covariates, int treatment = -1,
                   double outcome = std::numeric_limits<double>::quiet_NaN()) {
    std::vector<std::int16_t> meta(meta_->schema.metadata.size(), kMissing);
    return add_row(role, std::span<const std::int16_t>(covariates.begin(), covariates.size()), meta, treatment,
                   outcome);
  }

  ObservationTable build() {
    const auto& s = meta_->schema;
    const auto& layout = meta_->layout;
    auto& d = *data_;
    const std::size_t n = d.role.size();
    const std::size_t ncov = s.covariates.size();
    const std::size_t nmeta = s.metadata.size();
    const auto shared = s.shared_indices();
    d.x_stratum.resize(n);
    d.v_stratum.resize(n);
    d.n_source = 0;
    d.n_target = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto where = [i] { return "row " + std::to_string(i + 1); };
      std::span<const std::int16_t> cov(d.covariates.data() + i * ncov, ncov);
      for (std::size_t c = 0; c < ncov; ++c) {
        if (cov[c] >= static_cast<std::int16_t>(s.covariates[c].levels.size()) || cov[c] < kMissing) {
          throw SchemaError(where() + ": level code out of range for '" + s.covariates[c].name + "'");
        }
      }
      for (std::size_t c = 0; c < nmeta; ++c) {
        const auto code = d.metadata[i * nmeta + c];
        if (code >= static_cast<std::int16_t>(s.metadata[c].levels.size()) || code < kMissing) {
          throw SchemaError(where() + ": level code out of range for '" + s.metadata[c].name + "'");
        }
      }
      for (int c : shared) {
        if (cov[static_cast<std::size_t>(c)] == kMissing) {
          throw SchemaError(where() + ": shared covariate '" + s.covariates[static_cast<std::size_t>(c)].name +
                            "' is missing");
        }
      }
      d.x_stratum[i] = layout.x_code(cov);
      d.v_stratum[i] = layout.v_code(cov);
      if (d.role[i] == Role::source) {
        ++d.n_source;
        if (d.x_stratum[i] < 0) throw SchemaError(where() + ": source row is missing a covariate");
        if (d.treatment[i] != 0 && d.treatment[i] != 1) {
          throw SchemaError(where() + ": treatment must be 0 or 1 on source rows");
        }
        const double y = d.outcome[i];
        if (!std::isfinite(y)) throw SchemaError(where() + ": source row has no finite outcome");
        if (s.outcome_kind == OutcomeKind::binary && y != 0.0 && y != 1.0) {
          throw SchemaError(where() + ": binary outcome must be 0 or 1");
        }
      } else if (d.role[i] == Role::target) {
        ++d.n_target;
        if (d.treatment[i] != -1) throw SchemaError(where() + ": target row carries a treatment value");
        if (!std::isnan(d.outcome[i])) throw SchemaError(where() + ": target row carries an outcome value");
      } else {
        throw SchemaError(where() + ": role must be 0 (target) or 1 (source)");
      }
    }
    if (d.n_source == 0) throw SchemaError("table has no source rows");
    if (d.n_target == 0) throw SchemaError("table has no target rows");
    ObservationTable t;
    t.meta_ = meta_;
    t.data_ = std::move(data_);
    data_ = std::make_shared<Data>();
    return t;
  }

 private:
  std::shared_ptr<const Meta> meta_;
  std::shared_ptr<Data> data_;
};

inline ObservationTable ObservationTable::select(std::span<const std::size_t> rows) const {
  Builder b(meta_);
  b.reserve(rows.size());
  for (std::size_t r : rows) {
    b.add_row(role(r), covariates(r), {data_->metadata.data() + r * nmeta(), nmeta()}, treatment(r), outcome(r));
  }
  return b.build();
}

inline ObservationTable ObservationTable::select_as(std::span<const std::size_t> rows,
                                                  std::span<const Role> roles) const {
  Builder b(meta_);
  b.reserve(rows.size());
  std::vector<std::int16_t> v_only(ncov());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t r = rows[k];
    std::span<const std::int16_t> meta{data_->metadata.data() + r * nmeta(), nmeta()};
    if (roles[k] == Role::source) {
      if (!is_source(r)) throw SchemaError("select_as: a target row cannot become a source row");
      b.add_row(Role::source, covariates(r), meta, treatment(r), outcome(r));
    } else {
      std::fill(v_only.begin(), v_only.end(), kMissing);
      for (int c : layout().shared_columns()) {
        v_only[static_cast<std::size_t>(c)] = covariate(static_cast<std::size_t>(c), r);
      }
      b.add_row(Role::target, v_only, meta, -1, std::numeric_limits<double>::quiet_NaN());
    }
  }
  return b.build();
}

// ---------------------------------------------------------------------------
// CSV

/// Parses CSV text against a schema. The header must name the role column
/// `s`, every covariate and metadata column, and the treatment and outcome
/// columns. Empty cells mean missing; they are legal only for treatment and
/// outcome on target rows, non-shared covariates on target rows, and metadata.
inline ObservationTable load_table(std::string_view csv_text, const CovariateSchema& schema) {
  schema.validate();
  const auto rows = csv::parse(csv_text);
  if (rows.empty()) throw SchemaError("csv: no header row");
  const auto& header = rows.front();
  auto find = [&](std::string_view name) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw SchemaError("csv: missing column '" + std::string(name) + "'");
  };
  const std::size_t role_col = find(CovariateSchema::kRoleColumn);
  const std::size_t a_col = find(schema.treatment);
  const std::size_t y_col = find(schema.outcome);
  std::vector<std::size_t> cov_cols;
  for (const auto& c : schema.covariates) cov_cols.push_back(find(c.name));
  std::vector<std::size_t> meta_cols;
  for (const auto& c : schema.metadata) meta_cols.push_back(find(c.name));

  ObservationTable::Builder b(schema);
  b.reserve(rows.size() - 1);
  std::vector<std::int16_t> cov(schema.covariates.size());
  std::vector<std::int16_t> meta(schema.metadata.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const auto where = [r] { return "csv line " + std::to_string(r + 1); };
    if (row.size() != header.size()) {
      throw SchemaError(where() + ": expected " + std::to_string(header.size()) + " cells, found " +
                        std::to_string(row.size()));
    }
    const auto& role_cell = row[role_col];
    Role role;
    if (role_cell == "1") {
      role = Role::source;
    } else if (role_cell == "0") {
      role = Role::target;
    } else {
      throw SchemaError(where() + ": role must be 0 or 1, got '" + role_cell + "'");
    }
    for (std::size_t c = 0; c < cov.size(); ++c) {
      const auto& cell = row[cov_cols[c]];
      if (cell.empty()) {
        cov[c] = ObservationTable::kMissing;
        continue;
      }
      const int code = schema.covariates[c].code_of(cell);
      if (code < 0) {
        throw SchemaError(where() + ": unseen level '" + cell + "' in column '" + schema.covariates[c].name + "'");
      }
      cov[c] = static_cast<std::int16_t>(code);
    }
    for (std::size_t c = 0; c < meta.size(); ++c) {
      const auto& cell = row[meta_cols[c]];
      if (cell.empty()) {
        meta[c] = ObservationTable::kMissing;
        continue;
      }
      const int code = schema.metadata[c].code_of(cell);
      if (code < 0) {
        throw SchemaError(where() + ": unseen level '" + cell + "' in column '" + schema.metadata[c].name + "'");
      }
      meta[c] = static_cast<std::int16_t>(code);
    }
    int a = -1;
    const auto& a_cell = row[a_col];
    if (a_cell == "1") {
      a = 1;
    } else if (a_cell == "0") {
      a = 0;
    } else if (!a_cell.empty()) {
      throw SchemaError(where() + ": treatment must be 0 or 1, got '" + a_cell + "'");
    }
    double y = std::numeric_limits<double>::quiet_NaN();
    const auto& y_cell = row[y_col];
    if (!y_cell.empty()) {
      try {
        std::size_t used = 0;
        y = std::stod(y_cell, &used);
        if (used != y_cell.size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw SchemaError(where() + ": outcome '" + y_cell + "' is not a number");
      }
    }
    if (role == Role::target && a != -1) throw SchemaError(where() + ": target row carries a treatment value");
    if (role == Role::target && !y_cell.empty()) throw SchemaError(where() + ": target row carries an outcome value");
    if (role == Role::source && a == -1) throw SchemaError(where() + ": source row is missing the treatment");
    try {
      b.add_row(role, cov, meta, a, y);
    } catch (const SchemaError& e) {
      throw SchemaError(where() + ": " + e.what());
    }
  }
  return b.build();
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes the table back as CSV: s, covariates..., metadata..., treatment,
/// outcome. Loading the output with the same schema reproduces the rows.
inline std::string to_csv(const ObservationTable& t) {
  const auto& s = t.schema();
  std::string out;
  out += CovariateSchema::kRoleColumn;
  for (const auto& c : s.covariates) out += ',' + csv::escape(c.name);
  for (const auto& c : s.metadata) out += ',' + csv::escape(c.name);
  out += ',' + csv::escape(s.treatment) + ',' + csv::escape(s.outcome) + '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    out += t.is_source(i) ? '1' : '0';
    for (std::size_t c = 0; c < s.covariates.size(); ++c) {
      out += ',';
      const auto code = t.covariate(c, i);
      if (code >= 0) out += csv::escape(s.covariates[c].levels[static_cast<std::size_t>(code)]);
    }
    for (std::size_t c = 0; c < s.metadata.size(); ++c) {
      out += ',';
      const auto code = t.metadata(c, i);
      if (code >= 0) out += csv::escape(s.metadata[c].levels[static_cast<std::size_t>(code)]);
    }
    out += ',';
    if (t.treatment(i) >= 0) out += t.treatment(i) ? '1' : '0';
    out += ',';
    if (!std::isnan(t.outcome(i))) out += format_number(t.outcome(i));
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Positivity

struct PositivityReport {
  std::vector<std::int32_t> violations;        // V strata seen in target but not in source
  std::vector<std::string> violation_labels;
  std::vector<double> source_counts;           // indexed by V stratum
  std::vector<double> target_counts;

  bool holds() const noexcept { return violations.empty(); }

  std::string describe() const {
    std::string out;
    for (std::size_t i = 0; i < violation_labels.size(); ++i) {
      if (i) out += "; ";
      out += violation_labels[i];
    }
    return out;
  }
};

inline PositivityReport check_positivity(const ObservationTable& t, RowWeights w = {}) {
  PositivityReport r;
  const auto& layout = t.layout();
  r.source_counts.assign(layout.v_count(), 0.0);
  r.target_counts.assign(layout.v_count(), 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double wi = weight_at(w, i);
    if (wi == 0.0) continue;
    auto& counts = t.is_source(i) ? r.source_counts : r.target_counts;
    counts[static_cast<std::size_t>(t.v_stratum(i))] += wi;
  }
  for (std::size_t v = 0; v < layout.v_count(); ++v) {
    if (r.target_counts[v] > 0.0 && r.source_counts[v] == 0.0) {
      r.violations.push_back(static_cast<std::int32_t>(v));
      r.violation_labels.push_back(layout.v_label(static_cast<std::int32_t>(v)));
    }
  }
  return r;
}

inline void require_positivity(const ObservationTable& t, RowWeights w = {}) {
  const auto report = check_positivity(t, w);
  if (!report.holds()) {
    throw PositivityError("positivity violated: target levels without source rows: " + report.describe());
  }
}

// ---------------------------------------------------------------------------
// Stratum index

/// Row lists keyed by a stratum code, split by role and (for source rows) by
/// treatment arm.
struct StratumIndex {
  struct Cell {
    std::vector<std::size_t> target;
    std::array<std::vector<std::size_t>, 2> source_by_arm;
    std::size_t source_size() const noexcept { return source_by_arm[0].size() + source_by_arm[1].size(); }
  };
  std::vector<Cell> cells;
};

/// Index over X strata (by_shared=false) or V strata (by_shared=true). Target
/// rows without a complete X are left out of the X index.
inline StratumIndex build_stratum_index(const ObservationTable& t, bool by_shared) {
  StratumIndex idx;
  idx.cells.resize(by_shared ? t.layout().v_count() : t.layout().x_count());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const std::int32_t key = by_shared ? t.v_stratum(i) : t.x_stratum(i);
    if (key < 0) continue;
    auto& cell = idx.cells[static_cast<std::size_t>(key)];
    if (t.is_source(i)) {
      cell.source_by_arm[static_cast<std::size_t>(t.treatment(i))].push_back(i);
    } else {
      cell.target.push_back(i);
    }
  }
  return idx;
}

// ---------------------------------------------------------------------------
// Resampling and folds

/// Draws n_s source rows and n_t target rows i.i.d. with replacement. Output
/// holds the source draws first, then the target draws.
inline ObservationTable resample(const ObservationTable& t, std::uint64_t seed) {
  auto eng = rng::engine(seed, rng::Stream::resample);
  const auto src = t.source_rows();
  const auto tgt = t.target_rows();
  std::vector<std::size_t> picked;
  picked.reserve(t.size());
  std::uniform_int_distribution<std::size_t> pick_s(0, src.size() - 1);
  for (std::size_t i = 0; i < src.size(); ++i) picked.push_back(src[pick_s(eng)]);
  std::uniform_int_distribution<std::size_t> pick_t(0, tgt.size() - 1);
  for (std::size_t i = 0; i < tgt.size(); ++i) picked.push_back(tgt[pick_t(eng)]);
  return t.select(picked);
}

struct FoldAssignment {
  int K = 0;
  std::vector<int> fold;  // per row, in [0, K)

  std::vector<std::size_t> rows_in(int k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold.size(); ++i) {
      if (fold[i] == k) out.push_back(i);
    }
    return out;
  }

  /// Weight one on every row outside fold k.
  std::vector<double> complement_weights(int k) const {
    std::vector<double> w(fold.size());
    for (std::size_t i = 0; i < fold.size(); ++i) w[i] = fold[i] == k ? 0.0 : 1.0;
    return w;
  }
};

/// Random balanced K-fold split done separately within source and target rows.
inline FoldAssignment kfold(const ObservationTable& t, int K, std::uint64_t seed) {
  if (K < 2) throw ConfigError("kfold: K must be at least 2");
  if (static_cast<std::size_t>(K) > std::min(t.n_source(), t.n_target())) {
    throw ConfigError("kfold: K=" + std::to_string(K) + " exceeds min(n_s, n_t)");
  }
  auto eng = rng::engine(seed, rng::Stream::kfold);
  FoldAssignment f;
  f.K = K;
  f.fold.assign(t.size(), -1);
  for (Role r : {Role::source, Role::target}) {
    auto rows = t.rows_with_role(r);
    std::shuffle(rows.begin(), rows.end(), eng);
    for (std::size_t i = 0; i < rows.size(); ++i) f.fold[rows[i]] = static_cast<int>(i % static_cast<std::size_t>(K));
  }
  return f;
}

/// Conjunctive filter term: `column` (a shared covariate) must take one of
/// `levels`.
struct LevelFilter {
  std::string column;
  std::vector<std::string> levels;
};

/// Keeps the target rows satisfying every filter; source rows are untouched.
inline ObservationTable subgroup(const ObservationTable& t, std::span<const LevelFilter> filters) {
  const auto& s = t.schema();
  std::vector<std::pair<int, std::vector<std::int16_t>>> terms;
  for (const auto& f : filters) {
    const int c = s.covariate_index(f.column);
    if (c < 0 || !s.is_shared(c)) {
      throw ConfigError("subgroup: '" + f.column + "' is not a shared covariate");
    }
    std::vector<std::int16_t> codes;
    for (const auto& level : f.levels) {
      const int code = s.covariates[static_cast<std::size_t>(c)].code_of(level);
      if (code < 0) throw ConfigError("subgroup: unknown level '" + level + "' for '" + f.column + "'");
      codes.push_back(static_cast<std::int16_t>(code));
    }
    terms.emplace_back(c, std::move(codes));
  }
  std::vector<std::size_t> keep;
  keep.reserve(t.size());
  std::size_t kept_target = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    bool ok = true;
    if (!t.is_source(i)) {
      for (const auto& [c, codes] : terms) {
        const auto code = t.covariate(static_cast<std::size_t>(c), i);
        if (std::find(codes.begin(), codes.end(), code) == codes.end()) {
          ok = false;
          break;
        }
      }
      if (ok) ++kept_target;
    }
    if (ok) keep.push_back(i);
  }
  if (kept_target == 0) throw ConfigError("subgroup: no target rows satisfy the filter");
  return t.select(keep);
}

// ---------------------------------------------------------------------------
// Compression for resampling

/// Distinct rows with their multiplicities. For a binary outcome the cells are
/// (role, X stratum, A, Y) for source rows and V stratum for target rows, so
/// at most 4|X| + |V| cells. Continuous outcomes keep one cell per row.
/// Resampling rows i.i.d. from a table is the same as drawing a multinomial
/// over its cells with probabilities counts/total.
struct CompressedTable {
  ObservationTable cells;
  std::vector<double> counts;
};

inline CompressedTable compress(const ObservationTable& t) {
  if (t.schema().outcome_kind != OutcomeKind::binary) {
    return {t, std::vector<double>(t.size(), 1.0)};
  }
  const auto& layout = t.layout();
  const std::size_t nx = layout.x_count();
  std::vector<std::int64_t> slot(4 * nx + layout.v_count(), -1);
  std::vector<std::size_t> representative;
  std::vector<double> counts;
  for (std::size_t i = 0; i < t.size(); ++i) {
    std::size_t key;
    if (t.is_source(i)) {
      key = (static_cast<std::size_t>(t.x_stratum(i)) * 2 + static_cast<std::size_t>(t.treatment(i))) * 2 +
            (t.outcome(i) == 1.0 ? 1 : 0);
    } else {
      key = 4 * nx + static_cast<std::size_t>(t.v_stratum(i));
    }
    if (slot[key] < 0) {
      slot[key] = static_cast<std::int64_t>(representative.size());
      representative.push_back(i);
      counts.push_back(0.0);
    }
    counts[static_cast<std::size_t>(slot[key])] += 1.0;
  }
  // Target cells are keyed on V only, so their representatives keep V only.
  std::vector<Role> roles;
  roles.reserve(representative.size());
  for (std::size_t r : representative) roles.push_back(t.role(r));
  return {t.select_as(representative, roles), std::move(counts)};
}

/// Multinomial replicate weights: source cells share n_s draws in proportion
/// to their counts, target cells share n_t draws.
inline std::vector<double> multinomial_weights(const ObservationTable& cells, std::span<const double> counts,
                                               rng::Engine& eng) {
  std::vector<double> out(counts.size(), 0.0);
  for (Role r : {Role::source, Role::target}) {
    double remaining_mass = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (cells.role(i) == r) remaining_mass += counts[i];
    }
    auto draws_left = static_cast<long long>(std::llround(remaining_mass));
    for (std::size_t i = 0; i < counts.size() && draws_left > 0; ++i) {
      if (cells.role(i) != r) continue;
      const double p = remaining_mass > 0.0 ? std::min(1.0, counts[i] / remaining_mass) : 1.0;
      long long k;
      if (p >= 1.0) {
        k = draws_left;
      } else {
        std::binomial_distribution<long long> bin(draws_left, p);
        k = bin(eng);
      }
      out[i] = static_cast<double>(k);
      draws_left -= k;
      remaining_mass -= counts[i];
    }
  }
  return out;
}

}  // namespace tate
