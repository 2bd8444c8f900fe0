// Batch front end: estimate, grid, calibrate, verdict, subgroup, simulate,
// generate. Every output file carries the library version and a hash of the
// effective configuration.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "display.hpp"
#include "tate/tate.hpp"

namespace fs = std::filesystem;
using tate::display::ci_cell;
using tate::display::fixed6;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Plumbing

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw tate::ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw tate::ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

std::string num(double v) { return tate::format_number(v); }

/// Parses "lo:hi".
tate::GammaRange parse_range(const std::string& text, double step, const char* flag) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw tate::ConfigError(std::string(flag) + " expects lo:hi, got '" + text + "'");
  try {
    return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1)), step};
  } catch (const std::exception&) {
    throw tate::ConfigError(std::string(flag) + " expects lo:hi, got '" + text + "'");
  }
}

/// Parses "lo,hi".
tate::ClipBounds parse_clip(const std::string& text, const char* flag) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw tate::ConfigError(std::string(flag) + " expects lo,hi");
  tate::ClipBounds b;
  try {
    b = {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw tate::ConfigError(std::string(flag) + " expects lo,hi");
  }
  b.validate();
  return b;
}

/// Parses "column=level1,level2".
std::pair<std::string, std::vector<std::string>> parse_levels(const std::string& text, const char* flag) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
    throw tate::ConfigError(std::string(flag) + " expects column=level[,level...], got '" + text + "'");
  }
  std::vector<std::string> levels;
  std::stringstream ss(text.substr(eq + 1));
  for (std::string l; std::getline(ss, l, ',');) {
    if (!l.empty()) levels.push_back(l);
  }
  return {text.substr(0, eq), levels};
}

// ---------------------------------------------------------------------------
// Options shared by the data commands

struct DataOptions {
  std::string input;
  std::string schema;
  std::string method = "or";
  std::size_t B = 1000;
  int K = 2;
  double alpha = 0.05;
  std::string clip_pi = "0.01,0.99";
  std::string clip_w = "0.01,100";
  std::string mu = "frequency";
  bool saturated = false;
  std::string density = "discrete";
  std::string propensity;
  std::vector<std::string> where;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out = ".";
  std::string label = "all";
};

struct GridOptions {
  double gamma0 = 0.0;
  double gamma1 = 0.0;
  std::string gamma0_range = "-0.05:0.05";
  std::string gamma1_range = "-0.05:0.05";
  double step = 0.002;
};

struct CalibrateOptions {
  std::string partition;
  std::string standard = "diff-in-means";
  bool full_partition = false;
};

struct Loaded {
  tate::ObservationTable table;
  std::string input_hash;
  json schema;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--input", o.input, "CSV with columns s, covariates, metadata, treatment, outcome")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--schema", o.schema, "JSON schema descriptor")->required()->check(CLI::ExistingFile);
  cmd->add_option("--method", o.method, "or (bootstrap) or eif (cross-fit Wald)")
      ->check(CLI::IsMember({"or", "eif"}))
      ->capture_default_str();
  cmd->add_option("--B", o.B, "bootstrap replicates")->capture_default_str();
  cmd->add_option("--K", o.K, "cross-fitting folds")->capture_default_str();
  cmd->add_option("--alpha", o.alpha, "1 - confidence level")->capture_default_str();
  cmd->add_option("--clip-pi", o.clip_pi, "propensity clip bounds lo,hi")->capture_default_str();
  cmd->add_option("--clip-w", o.clip_w, "density-ratio clip bounds lo,hi")->capture_default_str();
  cmd->add_option("--mu", o.mu, "outcome model: frequency or wls")
      ->check(CLI::IsMember({"frequency", "wls"}))
      ->capture_default_str();
  cmd->add_flag("--saturated", o.saturated, "saturated design for --mu wls");
  cmd->add_option("--density", o.density, "density ratio: discrete or logistic")
      ->check(CLI::IsMember({"discrete", "logistic"}))
      ->capture_default_str();
  cmd->add_option("--propensity", o.propensity, "JSON file with the known design propensity")
      ->check(CLI::ExistingFile);
  cmd->add_option("--where", o.where, "restrict the target to column=level[,level...] (repeatable)");
  cmd->add_option("--seed", o.seed, "root seed")->required();
  cmd->add_option("--threads", o.threads, "worker threads (default: TT_THREADS or hardware)");
  cmd->add_option("--out", o.out, "output directory")->capture_default_str();
  cmd->add_option("--label", o.label, "row label in the text table")->capture_default_str();
}

void add_grid_options(CLI::App* cmd, GridOptions& g) {
  cmd->add_option("--gamma0-range", g.gamma0_range, "control-arm grid lo:hi")->capture_default_str();
  cmd->add_option("--gamma1-range", g.gamma1_range, "treated-arm grid lo:hi")->capture_default_str();
  cmd->add_option("--gamma-step", g.step, "grid step")->capture_default_str();
}

void add_calibrate_options(CLI::App* cmd, CalibrateOptions& c) {
  cmd->add_option("--partition", c.partition, "source split column=level[,level...] (listed levels form s1)")
      ->required();
  cmd->add_option("--standard", c.standard, "direct interval: diff-in-means or wls")
      ->check(CLI::IsMember({"diff-in-means", "wls"}))
      ->capture_default_str();
  cmd->add_flag("--standard-full", c.full_partition, "direct interval on the whole proxy target");
}

unsigned threads_of(const DataOptions& o) { return o.threads > 0 ? o.threads : tate::default_threads(); }

Loaded load(const DataOptions& o) {
  Loaded l;
  json schema_json;
  try {
    schema_json = json::parse(read_file(o.schema));
  } catch (const json::exception& e) {
    throw tate::SchemaError(std::string("schema: ") + e.what());
  }
  const auto schema = tate::CovariateSchema::from_json(schema_json);
  const auto text = read_file(o.input);
  l.input_hash = hex(fnv1a(text));
  l.schema = schema.to_json();
  l.table = tate::load_table(text, schema);
  if (!o.where.empty()) {
    std::vector<tate::LevelFilter> filters;
    for (const auto& w : o.where) {
      auto [column, levels] = parse_levels(w, "--where");
      filters.push_back({column, levels});
    }
    l.table = tate::subgroup(l.table, filters);
  }
  return l;
}

tate::EstimatorOptions estimator_options(const DataOptions& o, const tate::ObservationTable& t) {
  tate::EstimatorOptions e;
  e.method = o.method == "or" ? tate::InferenceMethod::or_bootstrap : tate::InferenceMethod::eif_wald;
  e.alpha = o.alpha;
  e.threads = threads_of(o);
  e.bootstrap.B = o.B;
  e.bootstrap.alpha = o.alpha;
  const auto clip_pi = parse_clip(o.clip_pi, "--clip-pi");
  const auto clip_w = parse_clip(o.clip_w, "--clip-w");
  const auto mu = o.mu == "frequency" ? tate::MuMethod::frequency : tate::MuMethod::wls_ipw;
  e.or_options.mu_method = mu;
  e.or_options.wls.saturated = o.saturated;
  e.or_options.clip_pi = clip_pi;
  e.eif_options.K = o.K;
  e.eif_options.mu_method = mu;
  e.eif_options.wls.saturated = o.saturated;
  e.eif_options.clip_pi = clip_pi;
  e.eif_options.clip_w = clip_w;
  e.eif_options.w_method = o.density == "discrete" ? tate::DensityMethod::discrete_ratio
                                                   : tate::DensityMethod::offset_logistic;
  if (!o.propensity.empty()) {
    json j;
    try {
      j = json::parse(read_file(o.propensity));
    } catch (const json::exception& ex) {
      throw tate::ConfigError(std::string("propensity: ") + ex.what());
    }
    const auto p = tate::propensity_from_json(j, t.layout());
    e.or_options.known_propensity = p;
    e.eif_options.known_propensity = p;
  }
  tate::validate_alpha(o.alpha);
  return e;
}

json data_config(const std::string& command, const DataOptions& o, const Loaded& l) {
  return {{"command", command},     {"input_sha", l.input_hash}, {"schema", l.schema},
          {"method", o.method},     {"B", o.B},                  {"K", o.K},
          {"alpha", o.alpha},       {"clip_pi", o.clip_pi},      {"clip_w", o.clip_w},
          {"mu", o.mu},             {"saturated", o.saturated},  {"density", o.density},
          {"propensity", o.propensity.empty() ? std::string() : hex(fnv1a(read_file(o.propensity)))},
          {"where", o.where},       {"seed", o.seed},            {"label", o.label}};
}

struct Meta {
  std::string hash;

  explicit Meta(const json& config) : hash(hex(fnv1a(config.dump()))) {}

  json to_json() const { return {{"version", tate::kVersion}, {"config_hash", hash}}; }
  std::string comment() const {
    return std::string("# tate ") + tate::kVersion + " config_hash=" + hash + "\n";
  }
};

tate::GammaGrid grid_of(const GridOptions& g) {
  tate::GammaGrid grid{parse_range(g.gamma0_range, g.step, "--gamma0-range"),
                       parse_range(g.gamma1_range, g.step, "--gamma1-range")};
  grid.validate();
  return grid;
}

fs::path out_dir(const DataOptions& o) {
  fs::path p(o.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw tate::ConfigError("cannot create output directory '" + o.out + "'");
  return p;
}

std::string level_text(double alpha) {
  return std::to_string(static_cast<int>(std::lround((1.0 - alpha) * 100.0))) + "% CI";
}

void write_estimates(const fs::path& dir, const Meta& meta, const std::vector<tate::GridEstimate>& reports) {
  std::string jsonl;
  for (const auto& r : reports) {
    for (const auto* e : {&r.theta1, &r.theta0, &r.tate}) {
      json j = e->to_json();
      j.update(meta.to_json());
      jsonl += j.dump() + "\n";
    }
  }
  write_file(dir / "estimates.jsonl", jsonl);
}

std::string grid_csv(const Meta& meta, const std::vector<tate::GridEstimate>& reports) {
  std::string s = meta.comment();
  s += "gamma0,gamma1,theta1,theta0,tate,lo,hi,significant\n";
  for (const auto& r : reports) {
    const int sig = r.tate.significant_positive() ? 1 : (r.tate.significant_negative() ? -1 : 0);
    s += num(r.gamma.gamma0) + "," + num(r.gamma.gamma1) + "," + num(r.theta1.point) + "," + num(r.theta0.point) +
         "," + num(r.tate.point) + "," + num(r.tate.lo) + "," + num(r.tate.hi) + "," + std::to_string(sig) + "\n";
  }
  return s;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_estimate(const DataOptions& o, const GridOptions& g) {
  const auto l = load(o);
  const auto est = estimator_options(o, l.table);
  auto config = data_config("estimate", o, l);
  config["gamma0"] = g.gamma0;
  config["gamma1"] = g.gamma1;
  const Meta meta(config);
  const auto reports = tate::estimate_grid(l.table, tate::GammaGrid::single({g.gamma0, g.gamma1}), est, o.seed);
  const auto dir = out_dir(o);
  write_estimates(dir, meta, reports);

  const auto& r = reports.front();
  std::ostringstream table;
  table << meta.comment();
  table << "label\tgamma0\tgamma1\ttheta1 (" << level_text(o.alpha) << ") x100\ttheta0 (" << level_text(o.alpha)
        << ") x100\tTATE (" << level_text(o.alpha) << ") x100\tmethod\n";
  table << o.label << '\t' << num(r.gamma.gamma0) << '\t' << num(r.gamma.gamma1) << '\t' << ci_cell(r.theta1) << '\t'
        << ci_cell(r.theta0) << '\t' << ci_cell(r.tate) << '\t' << tate::to_string(r.tate.method) << '\n';
  write_file(dir / "estimates.txt", table.str());
  std::cout << table.str();
  return 0;
}

int cmd_grid(const DataOptions& o, const GridOptions& g) {
  const auto l = load(o);
  const auto est = estimator_options(o, l.table);
  const auto grid = grid_of(g);
  auto config = data_config("grid", o, l);
  config["grid"] = grid.to_json();
  const Meta meta(config);
  const auto reports = tate::estimate_grid(l.table, grid, est, o.seed);
  const auto dir = out_dir(o);
  write_estimates(dir, meta, reports);
  write_file(dir / "grid.csv", grid_csv(meta, reports));
  std::cout << "wrote " << reports.size() << " grid points to " << (dir / "grid.csv").string() << "\n";
  return 0;
}

tate::CalibrationOptions calibration_options(const DataOptions& o, const CalibrateOptions& c,
                                             const tate::ObservationTable& t) {
  tate::CalibrationOptions opts;
  opts.estimator = estimator_options(o, t);
  opts.standard.method = c.standard == "wls" ? tate::StandardCiMethod::wls_covariates
                                             : tate::StandardCiMethod::diff_in_means;
  opts.standard_on_full_partition = c.full_partition;
  return opts;
}

std::string region_csv(const Meta& meta, const tate::CalibrationRegion& r) {
  std::string s = meta.comment();
  s += "gamma0,gamma1,c1,c2,c,forward_lo,forward_hi,backward_lo,backward_hi\n";
  for (std::size_t i = 0; i < r.size(); ++i) {
    s += num(r.points[i].gamma0) + "," + num(r.points[i].gamma1) + "," + (r.c1[i] ? "1" : "0") + "," +
         (r.c2[i] ? "1" : "0") + "," + (r.c[i] ? "1" : "0") + "," + num(r.forward.transported[i].lo) + "," +
         num(r.forward.transported[i].hi) + "," + num(r.backward.transported[i].lo) + "," +
         num(r.backward.transported[i].hi) + "\n";
  }
  return s;
}

json direction_json(const tate::CalibrationDirection& d) {
  return {{"proxy_source", d.proxy_source},
          {"proxy_target", d.proxy_target},
          {"factor", d.factor},
          {"standard", {{"estimate", d.standard.estimate}, {"se", d.standard.se}, {"lo", d.standard.lo},
                        {"hi", d.standard.hi}}}};
}

tate::PartitionSpec partition_of(const CalibrateOptions& c) {
  auto [column, levels] = parse_levels(c.partition, "--partition");
  return {column, levels};
}

int cmd_calibrate(const DataOptions& o, const GridOptions& g, const CalibrateOptions& c) {
  const auto l = load(o);
  const auto opts = calibration_options(o, c, l.table);
  const auto grid = grid_of(g);
  auto config = data_config("calibrate", o, l);
  config["grid"] = grid.to_json();
  config["partition"] = c.partition;
  config["standard"] = c.standard;
  config["standard_full"] = c.full_partition;
  const Meta meta(config);
  const auto region = tate::calibrate(l.table, partition_of(c), grid, opts, o.seed);
  const auto dir = out_dir(o);
  write_file(dir / "region.csv", region_csv(meta, region));
  json summary = meta.to_json();
  summary["forward"] = direction_json(region.forward);
  summary["backward"] = direction_json(region.backward);
  std::size_t in_c = 0;
  for (bool b : region.c) in_c += b ? 1 : 0;
  summary["region_size"] = in_c;
  summary["grid_size"] = region.size();
  write_file(dir / "calibration.json", summary.dump(2) + "\n");
  std::cout << in_c << " of " << region.size() << " grid points calibrated\n";
  return 0;
}

struct VerdictRow {
  std::string label;
  tate::GridEstimate origin;
  tate::SensitivityVerdict verdict;
  json calibration;
};

VerdictRow run_verdict(const tate::ObservationTable& t, const tate::GammaGrid& grid,
                       const tate::CalibrationOptions& opts, const CalibrateOptions& c, std::uint64_t seed,
                       std::vector<tate::GridEstimate>* reports_out, tate::CalibrationRegion* region_out) {
  const auto region = tate::calibrate(t, partition_of(c), grid, opts, seed);
  const auto reports = tate::estimate_grid(t, grid, opts.estimator, seed);
  VerdictRow row;
  row.verdict = tate::classify(reports, region);
  for (const auto& r : reports) {
    if (r.gamma.gamma0 == 0.0 && r.gamma.gamma1 == 0.0) row.origin = r;
  }
  row.calibration = {{"forward", direction_json(region.forward)}, {"backward", direction_json(region.backward)}};
  if (reports_out) *reports_out = reports;
  if (region_out) *region_out = region;
  return row;
}

std::string verdict_line(const VerdictRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%15s & %22s & %10s & %17s \\\\\n", r.label.c_str(), ci_cell(r.origin.tate).c_str(),
                r.verdict.min_tilt ? fixed6(*r.verdict.min_tilt).c_str() : "",
                tate::to_string(r.verdict.direction));
  return buf;
}

std::string verdict_header(double alpha) {
  return "label & TATE (" + level_text(alpha) + ") x100 & min tilt & direction\n";
}

int cmd_verdict(const DataOptions& o, const GridOptions& g, const CalibrateOptions& c) {
  const auto l = load(o);
  const auto opts = calibration_options(o, c, l.table);
  const auto grid = grid_of(g);
  grid.validate_contains_origin();
  auto config = data_config("verdict", o, l);
  config["grid"] = grid.to_json();
  config["partition"] = c.partition;
  config["standard"] = c.standard;
  config["standard_full"] = c.full_partition;
  const Meta meta(config);
  std::vector<tate::GridEstimate> reports;
  tate::CalibrationRegion region;
  auto row = run_verdict(l.table, grid, opts, c, o.seed, &reports, &region);
  row.label = o.label;
  const auto dir = out_dir(o);
  write_file(dir / "region.csv", region_csv(meta, region));
  write_file(dir / "grid.csv", grid_csv(meta, reports));
  json v = row.verdict.to_json();
  v.update(meta.to_json());
  v["label"] = row.label;
  v["estimate"] = row.origin.tate.to_json();
  v["calibration"] = row.calibration;
  write_file(dir / "verdict.json", v.dump(2) + "\n");
  const std::string text = meta.comment() + verdict_header(o.alpha) + verdict_line(row);
  write_file(dir / "verdict.txt", text);
  std::cout << text;
  return 0;
}

int cmd_subgroup(DataOptions o, const GridOptions& g, const CalibrateOptions& c, const std::string& by) {
  const auto l = load(o);
  const auto opts = calibration_options(o, c, l.table);
  const auto grid = grid_of(g);
  grid.validate_contains_origin();
  const auto& schema = l.table.schema();
  const int col = schema.covariate_index(by);
  if (col < 0 || !schema.is_shared(col)) throw tate::ConfigError("subgroup: '" + by + "' is not a shared covariate");
  auto config = data_config("subgroup", o, l);
  config["grid"] = grid.to_json();
  config["partition"] = c.partition;
  config["standard"] = c.standard;
  config["standard_full"] = c.full_partition;
  config["by"] = by;
  const Meta meta(config);

  std::vector<std::size_t> present(schema.covariates[static_cast<std::size_t>(col)].levels.size(), 0);
  for (std::size_t i = 0; i < l.table.size(); ++i) {
    if (!l.table.is_source(i) && l.table.covariate(static_cast<std::size_t>(col), i) >= 0) {
      ++present[static_cast<std::size_t>(l.table.covariate(static_cast<std::size_t>(col), i))];
    }
  }
  std::string text = meta.comment() + verdict_header(o.alpha);
  std::string csv = meta.comment() + "label,n_target,estimate,lo,hi,min_tilt,direction\n";
  json rows = json::array();
  for (std::size_t level = 0; level < present.size(); ++level) {
    if (present[level] == 0) continue;
    const auto& name = schema.covariates[static_cast<std::size_t>(col)].levels[level];
    const tate::LevelFilter f{by, {name}};
    const auto sub = tate::subgroup(l.table, std::span<const tate::LevelFilter>(&f, 1));
    auto row = run_verdict(sub, grid, opts, c, o.seed, nullptr, nullptr);
    row.label = name;
    text += verdict_line(row);
    csv += tate::csv::escape(name) + "," + std::to_string(sub.n_target()) + "," + num(row.origin.tate.point) + "," +
           num(row.origin.tate.lo) + "," + num(row.origin.tate.hi) + "," +
           (row.verdict.min_tilt ? num(*row.verdict.min_tilt) : std::string()) + "," +
           tate::to_string(row.verdict.direction) + "\n";
    json j = row.verdict.to_json();
    j["label"] = name;
    j["estimate"] = row.origin.tate.to_json();
    rows.push_back(j);
  }
  const auto dir = out_dir(o);
  write_file(dir / "subgroups.txt", text);
  write_file(dir / "subgroups.csv", csv);
  json out = meta.to_json();
  out["subgroups"] = rows;
  write_file(dir / "subgroups.json", out.dump(2) + "\n");
  std::cout << text;
  return 0;
}

struct SimulateOptions {
  std::string config;
  std::string scenario = "A";
  std::vector<std::string> estimators{"or", "eif"};
  std::size_t n = 100000;
  std::vector<double> gamma1{0.0, 0.05};
  std::size_t replicates = 1000;
  double alpha = 0.05;
  std::size_t B = 1000;
  int K = 2;
  std::uint64_t seed = 0;
  bool seed_given = false;
  unsigned threads = 0;
  std::string out = ".";
};

int cmd_simulate(const SimulateOptions& s) {
  json j;
  if (!s.config.empty()) {
    try {
      j = json::parse(read_file(s.config));
    } catch (const json::exception& e) {
      throw tate::ConfigError(std::string("simulation config: ") + e.what());
    }
  } else {
    j = {{"scenario", s.scenario}, {"estimator", s.estimators}, {"n", s.n},         {"gamma1", s.gamma1},
         {"replicates", s.replicates}, {"alpha", s.alpha},       {"B", s.B},         {"K", s.K}};
  }
  if (s.seed_given) j["seed"] = s.seed;
  auto c = tate::sim::StudyConfig::from_json(j);
  c.threads = s.threads > 0 ? s.threads : tate::default_threads();
  json config = c.to_json();
  config["command"] = "simulate";
  const Meta meta(config);
  const auto dgp = tate::sim::builtin_dgp(c.scenario);
  const auto reports = tate::sim::run_study(dgp, c);
  fs::path dir(s.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw tate::ConfigError("cannot create output directory '" + s.out + "'");
  const std::string text = meta.comment() + tate::sim::to_csv(reports);
  write_file(dir / "simulation.csv", text);
  std::cout << text;
  return 0;
}

int cmd_generate(const std::string& scenario, std::size_t n_s, std::size_t n_t, std::uint64_t seed,
                 const std::string& out) {
  const auto dgp = tate::sim::builtin_dgp(tate::sim::scenario_from_string(scenario));
  const auto t = tate::sim::generate(dgp, n_s, n_t, seed);
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw tate::ConfigError("cannot create output directory '" + out + "'");
  write_file(dir / "simulated.csv", tate::to_csv(t));
  write_file(dir / "simulated_schema.json", t.schema().to_json().dump(2) + "\n");
  std::cout << "wrote " << t.size() << " rows to " << (dir / "simulated.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Target-population treatment effects under exponential tilting"};
  app.set_version_flag("--version", tate::kVersion);
  app.require_subcommand(1);

  DataOptions data;
  GridOptions grid;
  CalibrateOptions cal;
  std::string by;

  auto* estimate = app.add_subcommand("estimate", "estimate at one (gamma0, gamma1)");
  add_data_options(estimate, data);
  estimate->add_option("--gamma0", grid.gamma0, "control-arm tilt")->capture_default_str();
  estimate->add_option("--gamma1", grid.gamma1, "treated-arm tilt")->capture_default_str();

  auto* grid_cmd = app.add_subcommand("grid", "estimates over a (gamma0, gamma1) grid");
  add_data_options(grid_cmd, data);
  add_grid_options(grid_cmd, grid);

  auto* calibrate = app.add_subcommand("calibrate", "calibration region from a source partition");
  add_data_options(calibrate, data);
  add_grid_options(calibrate, grid);
  add_calibrate_options(calibrate, cal);

  auto* verdict = app.add_subcommand("verdict", "calibration region, grid estimates and sensitivity verdict");
  add_data_options(verdict, data);
  add_grid_options(verdict, grid);
  add_calibrate_options(verdict, cal);

  auto* subgroup = app.add_subcommand("subgroup", "one verdict per level of a shared covariate");
  add_data_options(subgroup, data);
  add_grid_options(subgroup, grid);
  add_calibrate_options(subgroup, cal);
  subgroup->add_option("--by", by, "shared covariate defining the target subgroups")->required();

  SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "replication study on the built-in design");
  simulate->add_option("--config", sim.config, "study config JSON")->check(CLI::ExistingFile);
  simulate->add_option("--scenario", sim.scenario, "A or B")->capture_default_str();
  simulate->add_option("--estimator", sim.estimators, "or, eif or both")->delimiter(',');
  simulate->add_option("--n", sim.n, "n_s = n_t")->capture_default_str();
  simulate->add_option("--gamma1", sim.gamma1, "treated-arm tilts")->delimiter(',');
  simulate->add_option("--replicates", sim.replicates)->capture_default_str();
  simulate->add_option("--alpha", sim.alpha)->capture_default_str();
  simulate->add_option("--B", sim.B)->capture_default_str();
  simulate->add_option("--K", sim.K)->capture_default_str();
  auto* sim_seed = simulate->add_option("--seed", sim.seed, "root seed (required unless in --config)");
  simulate->add_option("--threads", sim.threads, "worker threads (default: TT_THREADS or hardware)");
  simulate->add_option("--out", sim.out, "output directory")->capture_default_str();

  std::string gen_scenario = "A";
  std::size_t gen_ns = 1000;
  std::size_t gen_nt = 1000;
  std::uint64_t gen_seed = 0;
  std::string gen_out = ".";
  auto* generate = app.add_subcommand("generate", "draw a dataset from the built-in design");
  generate->add_option("--scenario", gen_scenario)->capture_default_str();
  generate->add_option("--n-source", gen_ns)->capture_default_str();
  generate->add_option("--n-target", gen_nt)->capture_default_str();
  generate->add_option("--seed", gen_seed)->required();
  generate->add_option("--out", gen_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return tate::ConfigError("").exit_code();
  }

  try {
    if (*estimate) return cmd_estimate(data, grid);
    if (*grid_cmd) return cmd_grid(data, grid);
    if (*calibrate) return cmd_calibrate(data, grid, cal);
    if (*verdict) return cmd_verdict(data, grid, cal);
    if (*subgroup) return cmd_subgroup(data, grid, cal, by);
    if (*simulate) {
      sim.seed_given = sim_seed->count() > 0;
      return cmd_simulate(sim);
    }
    if (*generate) return cmd_generate(gen_scenario, gen_ns, gen_nt, gen_seed, gen_out);
  } catch (const tate::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  }
  return 0;
}
