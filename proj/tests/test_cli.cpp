#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "display.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = TATE_CLI_PATH;
const std::string kData = TATE_DATA_DIR;

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("tate_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string toy(const std::string& extra = "") {
  return "--input " + kData + "/toy.csv --schema " + kData + "/toy_schema.json " + extra;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const std::string kSmallGrid = "--gamma0-range -0.01:0.01 --gamma1-range -0.01:0.01 --gamma-step 0.002";

}  // namespace

TEST(Display, PercentagePointCells) {
  using tate::display::ci_cell;
  using tate::display::pp;
  EXPECT_EQ(ci_cell(-0.0084, -0.0164, -0.0004), "-0.84 (-1.64, -0.04)");
  EXPECT_EQ(ci_cell(-0.006, -0.013, 0.001), "-0.6 (-1.3, 0.1)");
  EXPECT_EQ(ci_cell(-0.0077, -0.0155, 0.0), "-0.77 (-1.55, 0)");
  EXPECT_EQ(pp(-0.01), "-1");
  EXPECT_EQ(pp(-0.00001), "0");
  EXPECT_EQ(tate::display::fixed6(std::exp(0.02)), "1.020201");
}

TEST(Estimate, OneReportAndTableRow) {
  const auto out = scratch("estimate");
  ASSERT_EQ(run("estimate " + toy("--seed 3 --B 200 --out " + out.string())), 0);
  const auto jsonl = slurp(out / "estimates.jsonl");
  std::istringstream lines(jsonl);
  int n = 0;
  for (std::string line; std::getline(lines, line); ++n) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("version"), "0.1.0");
    EXPECT_EQ(j.at("config_hash").get<std::string>().size(), 16u);
    EXPECT_EQ(j.at("method"), "or-bootstrap");
  }
  EXPECT_EQ(n, 3);  // theta1, theta0, tate
  const auto table = slurp(out / "estimates.txt");
  EXPECT_EQ(table.rfind("# tate 0.1.0 config_hash=", 0), 0u);
  const std::regex cell(R"(-?\d+(\.\d{1,2})? \(-?\d+(\.\d{1,2})?, -?\d+(\.\d{1,2})?\))");
  EXPECT_TRUE(std::regex_search(table, cell)) << table;
}

TEST(Estimate, EifMethodTag) {
  const auto out = scratch("eif");
  ASSERT_EQ(run("estimate " + toy("--method eif --K 2 --seed 3 --out " + out.string())), 0);
  const auto jsonl = slurp(out / "estimates.jsonl");
  EXPECT_NE(jsonl.find("\"method\":\"eif-wald\""), std::string::npos);
  EXPECT_NE(jsonl.find("\"K\":2"), std::string::npos);
  EXPECT_NE(slurp(out / "estimates.txt").find("eif-wald"), std::string::npos);
}

TEST(Estimate, ByteIdenticalReruns) {
  const auto a = scratch("rerun_a");
  const auto b = scratch("rerun_b");
  ASSERT_EQ(run("grid " + toy("--seed 11 --B 100 --threads 1 " + kSmallGrid + " --out " + a.string())), 0);
  ASSERT_EQ(run("grid " + toy("--seed 11 --B 100 --threads 4 " + kSmallGrid + " --out " + b.string())), 0);
  EXPECT_EQ(slurp(a / "grid.csv"), slurp(b / "grid.csv"));
  EXPECT_EQ(slurp(a / "estimates.jsonl"), slurp(b / "estimates.jsonl"));
  const auto c = scratch("rerun_c");
  ASSERT_EQ(run("grid " + toy("--seed 12 --B 100 " + kSmallGrid + " --out " + c.string())), 0);
  EXPECT_NE(slurp(a / "grid.csv"), slurp(c / "grid.csv"));
}

TEST(Estimate, KnownPropensityAndWlsOptions) {
  const auto out = scratch("known");
  EXPECT_EQ(run("estimate " + toy("--seed 1 --B 50 --mu wls --propensity " + kData +
                                  "/toy_propensity.json --out " + out.string())),
            0);
  EXPECT_EQ(run("estimate " + toy("--seed 1 --method eif --density logistic --out " + out.string())), 0);
  EXPECT_EQ(run("estimate " + toy("--seed 1 --B 50 --where region=North --out " + out.string())), 0);
}

TEST(ExitCodes, ConfigErrors) {
  const auto out = scratch("config");
  EXPECT_EQ(run("estimate " + toy("--out " + out.string())), 5);  // no seed
  EXPECT_EQ(run("estimate " + toy("--seed 1 --clip-pi 0,0.5 --out " + out.string())), 5);
  EXPECT_EQ(run("estimate " + toy("--seed 1 --alpha 0 --out " + out.string())), 5);
  EXPECT_EQ(run("grid " + toy("--seed 1 --gamma-step 0.003 --out " + out.string())), 5);
  EXPECT_EQ(run("estimate --input /nonexistent.csv --schema " + kData + "/toy_schema.json --seed 1"), 5);
  EXPECT_EQ(run("estimate " + toy("--seed 1 --where age=young --out " + out.string())), 5);
  EXPECT_EQ(run("bogus"), 5);
}

TEST(ExitCodes, SchemaPositivityEstimation) {
  const auto dir = scratch("codes");
  write(dir / "bad_schema.json", R"({"covariates": [{"name": "g"}], "shared": ["g"]})");
  EXPECT_EQ(run("estimate --input " + kData + "/toy.csv --schema " + (dir / "bad_schema.json").string() +
                " --seed 1 --out " + dir.string()),
            2);
  write(dir / "schema.json", R"({"covariates": [{"name": "g", "levels": ["F", "M"]}], "shared": ["g"]})");
  write(dir / "bad_rows.csv", "s,g,a,y\n1,F,1,1\n1,F,0,0\n0,X,,\n");
  EXPECT_EQ(run("estimate --input " + (dir / "bad_rows.csv").string() + " --schema " +
                (dir / "schema.json").string() + " --seed 1 --out " + dir.string()),
            2);
  // Target level M has no source rows.
  write(dir / "positivity.csv", "s,g,a,y\n1,F,1,1\n1,F,0,0\n1,F,1,0\n1,F,0,1\n0,M,,\n");
  EXPECT_EQ(run("estimate --input " + (dir / "positivity.csv").string() + " --schema " +
                (dir / "schema.json").string() + " --seed 1 --out " + dir.string()),
            3);
  // Stratum M has no control rows.
  write(dir / "one_arm.csv", "s,g,a,y\n1,F,1,1\n1,F,0,0\n1,M,1,0\n1,M,1,1\n0,M,,\n0,F,,\n");
  EXPECT_EQ(run("estimate --input " + (dir / "one_arm.csv").string() + " --schema " +
                (dir / "schema.json").string() + " --seed 1 --out " + dir.string()),
            4);
}

TEST(Verdict, RegionAndVerdictFiles) {
  const auto out = scratch("verdict");
  ASSERT_EQ(run("verdict " + toy("--seed 5 --B 200 --partition site=site1 " + kSmallGrid + " --out " +
                                 out.string())),
            0);
  const auto region = slurp(out / "region.csv");
  EXPECT_NE(region.find("gamma0,gamma1,c1,c2,c,forward_lo,forward_hi,backward_lo,backward_hi\n"), std::string::npos);
  std::size_t rows = 0;
  std::istringstream in(region);
  for (std::string line; std::getline(in, line);) rows += (!line.empty() && line[0] != '#') ? 1 : 0;
  EXPECT_EQ(rows, 1u + 11u * 11u);
  const auto v = nlohmann::json::parse(slurp(out / "verdict.json"));
  EXPECT_TRUE(v.contains("direction"));
  EXPECT_TRUE(v.contains("min_tilt"));
  EXPECT_TRUE(v.contains("config_hash"));
  const auto d = v.at("direction").get<std::string>();
  EXPECT_TRUE(d == "Positive Only" || d == "Negative Only" || d == "Both Directions" || d == "Neither Direction");
  if (!v.at("min_tilt").is_null()) {
    const double k = std::log(v.at("min_tilt").get<double>()) / 0.002;
    EXPECT_NEAR(k, std::round(k), 1e-9);
  }
}

TEST(Verdict, SingleLevelPartitionIsAnError) {
  const auto out = scratch("one_level");
  EXPECT_EQ(run("calibrate " + toy("--seed 5 --B 50 --partition site=site1,site2 " + kSmallGrid + " --out " +
                                   out.string())),
            5);
  EXPECT_EQ(run("calibrate " + toy("--seed 5 --B 50 --partition colour=red " + kSmallGrid + " --out " +
                                   out.string())),
            5);
}

TEST(Calibrate, WritesRegionAndSummary) {
  const auto out = scratch("calibrate");
  ASSERT_EQ(run("calibrate " + toy("--seed 2 --method eif --partition age=young,mid " + kSmallGrid + " --out " +
                                   out.string())),
            0);
  const auto s = nlohmann::json::parse(slurp(out / "calibration.json"));
  EXPECT_EQ(s.at("grid_size"), 121);
  EXPECT_TRUE(s.at("forward").contains("standard"));
}

TEST(Subgroup, OneRowPerLevel) {
  const auto out = scratch("subgroup");
  ASSERT_EQ(run("subgroup " + toy("--seed 5 --B 100 --partition site=site1 --by region " + kSmallGrid + " --out " +
                                  out.string())),
            0);
  const auto j = nlohmann::json::parse(slurp(out / "subgroups.json"));
  ASSERT_EQ(j.at("subgroups").size(), 3u);
  const auto text = slurp(out / "subgroups.txt");
  for (const char* name : {"North", "South", "East"}) EXPECT_NE(text.find(name), std::string::npos);
  EXPECT_EQ(run("subgroup " + toy("--seed 5 --B 100 --partition site=site1 --by age " + kSmallGrid)), 5);
}

TEST(Simulate, TableShapedCsvAndScenarioSwitch) {
  const auto a = scratch("sim_a");
  const auto b = scratch("sim_b");
  const std::string args = "--n 20000 --replicates 3 --B 30 --seed 4 --threads 2";
  ASSERT_EQ(run("simulate " + args + " --out " + a.string()), 0);
  ASSERT_EQ(run("simulate --scenario B " + args + " --out " + b.string()), 0);
  const auto csv = slurp(a / "simulation.csv");
  std::size_t rows = 0;
  std::istringstream in(csv);
  for (std::string line; std::getline(in, line);) rows += (!line.empty() && line[0] != '#') ? 1 : 0;
  EXPECT_EQ(rows, 1u + 4u);
  EXPECT_NE(csv.find("A,OR,20000,0,0,"), std::string::npos);
  EXPECT_NE(slurp(b / "simulation.csv").find("B,EIF,20000,0,0.05"), std::string::npos);
  const auto again = scratch("sim_a2");
  ASSERT_EQ(run("simulate " + args + " --out " + again.string()), 0);
  EXPECT_EQ(slurp(again / "simulation.csv"), csv);
  EXPECT_EQ(run("simulate --n 1000 --replicates 3"), 5);  // no seed
}

TEST(Simulate, ConfigFile) {
  const auto dir = scratch("sim_config");
  write(dir / "study.json",
        R"({"scenario": "A", "estimator": "eif", "n": 20000, "gamma1": [0.05], "replicates": 3, "seed": 8})");
  ASSERT_EQ(run("simulate --config " + (dir / "study.json").string() + " --out " + dir.string()), 0);
  EXPECT_NE(slurp(dir / "simulation.csv").find("A,EIF,20000,0,0.05"), std::string::npos);
}

TEST(Generate, RoundTripsThroughEstimate) {
  const auto dir = scratch("generate");
  ASSERT_EQ(run("generate --n-source 20000 --n-target 20000 --seed 1 --out " + dir.string()), 0);
  EXPECT_EQ(run("estimate --input " + (dir / "simulated.csv").string() + " --schema " +
                (dir / "simulated_schema.json").string() + " --seed 1 --B 50 --out " + dir.string()),
            0);
}
