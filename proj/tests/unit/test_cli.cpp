#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "str/app/config.hpp"
#include "str/app/csv.hpp"
#include "support/cli_helpers.hpp"

using namespace str;
using namespace str::app;
using clitest::read_file;
using clitest::run_cli;
using clitest::TempDir;
using clitest::write_file;

namespace {

/// Trend plus period-7 pattern plus a deterministic wiggle, with one gap.
std::string fixture_csv(std::size_t n) {
  std::ostringstream os;
  os << "day,sales,temp\n";
  for (std::size_t t = 0; t < n; ++t) {
    const double v = 10.0 + 0.05 * t + std::sin(2.0 * M_PI * t / 7.0) + 0.3 * std::cos(1.7 * t * t);
    os << t + 1 << ',';
    if (t != 11) os << format_number(v);
    os << ',' << format_number(20.0 + std::sin(0.1 * t)) << '\n';
  }
  return os.str();
}

const char* decompose_yaml = R"(input: data.csv
value_column: sales
time_column: day
output: out
model:
  trend: 100
  seasonals:
    - name: weekly
      cycle: 7
      lambdas: [10, 1, 10]
  covariates:
    - column: temp
)";

CsvTable read_table(const std::filesystem::path& p) {
  std::istringstream is(read_file(p));
  return read_csv(is, p.string());
}

double cell(const CsvTable& t, std::size_t row, const std::string& col) {
  return std::stod(t.rows[row][*t.column(col)]);
}

}  // namespace

TEST(Config, ParsesModelAndCv) {
  const auto cfg = parse_config_text(R"(input: x.csv
value_column: y
fit: robust
model:
  trend: auto
  seasonals:
    - name: week
      cycle: 7
      lambdas: {tt: 1, st: auto, ss: 3}
cv:
  mode: kfold
  folds: 5
  gap: 7
)");
  EXPECT_EQ(cfg.value_column, "y");
  EXPECT_EQ(cfg.fit, FitKind::robust);
  EXPECT_TRUE(cfg.trend.automatic);
  ASSERT_EQ(cfg.seasonals.size(), 1u);
  EXPECT_EQ(*cfg.seasonals[0].cycle, 7u);
  EXPECT_DOUBLE_EQ(cfg.seasonals[0].lambdas[0].value, 1.0);
  EXPECT_TRUE(cfg.seasonals[0].lambdas[1].automatic);
  EXPECT_EQ(cfg.cv.mode, CvMode::kfold);
  EXPECT_EQ(cfg.cv.folds, 5u);
  EXPECT_EQ(cfg.cv.gap, 7u);
}

TEST(Config, ErrorsCarryLineNumbers) {
  auto message = [](const std::string& text) {
    try {
      parse_config_text(text, "run.yaml");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  EXPECT_EQ(message("input: a.csv\nbogus: 1\n").rfind("run.yaml:2:", 0), 0u);
  EXPECT_EQ(message("model:\n  seasonals:\n    - name: w\n      cycle: 1\n      lambdas: [1, 1, 1]\n").rfind("run.yaml:4:", 0),
            0u);
  EXPECT_EQ(message("model:\n  trend: [1, 2\n").rfind("run.yaml:", 0), 0u);
  EXPECT_NE(message("model:\n  trend: auto\n").find("cv"), std::string::npos);
  EXPECT_NE(message("fit: lasso\n").find("run.yaml:1:"), std::string::npos);
}

TEST(Csv, BlankCellsAreMissingAndNumbersRoundTrip) {
  std::istringstream is("t,y\n1,2.5\n2,\n3,-1e-300\n");
  const auto table = read_csv(is);
  const auto y = numeric_column(table, "y", "mem");
  ASSERT_EQ(y.size(), 3u);
  EXPECT_DOUBLE_EQ(*y[0], 2.5);
  EXPECT_FALSE(y[1]);
  EXPECT_DOUBLE_EQ(*y[2], -1e-300);
  for (double v : {0.1, 1.0 / 3.0, -2.718281828459045, 1e300}) EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_THROW(numeric_column(table, "z", "mem"), DataError);
  std::istringstream bad("t,y\n1,abc\n");
  const auto bt = read_csv(bad);
  EXPECT_THROW(numeric_column(bt, "y", "mem"), DataError);
}

TEST(Cli, DecomposeReconstructsAndIsDeterministic) {
  TempDir dir;
  write_file(dir / "data.csv", fixture_csv(60));
  write_file(dir / "run.yaml", decompose_yaml);
  ASSERT_EQ(run_cli("decompose -c " + (dir / "run.yaml").string(), dir / "log1"), 0) << read_file(dir / "log1");
  const auto first = read_file(dir / "out/components.csv");
  const auto table = read_table(dir / "out/components.csv");
  ASSERT_EQ(table.rows.size(), 60u);
  for (const char* col : {"time", "observed", "trend", "weekly", "temp", "remainder", "trend_lower", "weekly_upper"})
    EXPECT_TRUE(table.column(col)) << col;
  for (std::size_t t = 0; t < 60; ++t) {
    if (t == 11) {
      EXPECT_TRUE(table.rows[t][*table.column("observed")].empty());
      continue;
    }
    const double sum = cell(table, t, "trend") + cell(table, t, "weekly") + cell(table, t, "temp") +
                       cell(table, t, "remainder");
    EXPECT_NEAR(sum, cell(table, t, "observed"), 1e-8);
  }
  ASSERT_EQ(run_cli("decompose -c " + (dir / "run.yaml").string(), dir / "log2"), 0);
  EXPECT_EQ(read_file(dir / "out/components.csv"), first);
  EXPECT_TRUE(std::filesystem::exists(dir / "out/lambdas.json"));
}

TEST(Cli, SvgHasOnePanelPerComponent) {
  TempDir dir;
  write_file(dir / "data.csv", fixture_csv(40));
  write_file(dir / "run.yaml", decompose_yaml);
  ASSERT_EQ(run_cli("decompose -c " + (dir / "run.yaml").string(), dir / "log"), 0) << read_file(dir / "log");
  const auto svg = read_file(dir / "out/decomposition.svg");
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  for (const char* id : {"panel-data", "panel-trend", "panel-weekly", "panel-temp", "panel-remainder"})
    EXPECT_NE(svg.find(std::string("id=\"") + id + "\""), std::string::npos) << id;
  // Tags balance: every opened element closes.
  std::vector<std::string> stack;
  std::size_t pos = 0;
  while ((pos = svg.find('<', pos)) != std::string::npos) {
    const auto end = svg.find('>', pos);
    ASSERT_NE(end, std::string::npos);
    const std::string tag = svg.substr(pos + 1, end - pos - 1);
    pos = end + 1;
    if (tag.empty() || tag[0] == '?' || tag[0] == '!' || tag.back() == '/') continue;
    const auto name_end = tag.find_first_of(" \t\n");
    if (tag[0] == '/') {
      ASSERT_FALSE(stack.empty());
      EXPECT_EQ(stack.back(), tag.substr(1));
      stack.pop_back();
    } else {
      stack.push_back(tag.substr(0, name_end));
    }
  }
  EXPECT_TRUE(stack.empty());
}

TEST(Cli, ExitCodes) {
  TempDir dir;
  write_file(dir / "data.csv", fixture_csv(30));
  std::string yaml = decompose_yaml;
  yaml.replace(yaml.find("sales"), 5, "price");
  write_file(dir / "missing.yaml", yaml);
  EXPECT_EQ(run_cli("decompose -c " + (dir / "missing.yaml").string(), dir / "log"), 3);
  EXPECT_NE(read_file(dir / "log").find("data error"), std::string::npos);
  write_file(dir / "bad.yaml", "input: data.csv\nunknown_key: 1\n");
  EXPECT_EQ(run_cli("decompose -c " + (dir / "bad.yaml").string(), dir / "log"), 2);
  EXPECT_NE(read_file(dir / "log").find(":2:"), std::string::npos);
  EXPECT_EQ(run_cli("decompose", dir / "log"), 2);
  write_file(dir / "zero.yaml", "input: data.csv\nvalue_column: sales\noutput: out\nmodel:\n  trend: 0\n");
  EXPECT_EQ(run_cli("decompose -c " + (dir / "zero.yaml").string(), dir / "log"), 4);
}

TEST(Cli, ForecastExtendsSeries) {
  TempDir dir;
  std::ostringstream os;
  os << "y\n";
  for (int t = 0; t < 30; ++t) os << format_number(2.0 + 0.5 * t) << '\n';
  write_file(dir / "line.csv", os.str());
  write_file(dir / "fc.yaml", "input: line.csv\nvalue_column: y\noutput: fc\nhorizon: 5\nmodel:\n  trend: 10\n");
  ASSERT_EQ(run_cli("forecast -c " + (dir / "fc.yaml").string(), dir / "log"), 0) << read_file(dir / "log");
  const auto table = read_table(dir / "fc/forecast.csv");
  ASSERT_EQ(table.rows.size(), 5u);
  for (std::size_t h = 0; h < 5; ++h) {
    EXPECT_NEAR(cell(table, h, "mean"), 2.0 + 0.5 * (30 + h), 1e-6);
    EXPECT_LT(cell(table, h, "lower"), cell(table, h, "mean"));
    EXPECT_GT(cell(table, h, "upper"), cell(table, h, "mean"));
  }
}

TEST(Cli, SimulateShapeAndSeed) {
  TempDir dir;
  write_file(dir / "sim.yaml", R"(output: sim
simulate:
  dgp: [stochastic, deterministic]
  n: 200
  gamma: 0.2
  replications: 2
  seed: 7
  pilot: false
cv:
  mode: kfold
  folds: 5
  gap: 7
  max_evaluations: 10
  restarts: 0
)");
  const auto cfg = (dir / "sim.yaml").string();
  ASSERT_EQ(run_cli("simulate -j 2 -c " + cfg, dir / "log"), 0) << read_file(dir / "log");
  const auto first = read_file(dir / "sim/rmse.csv");
  const auto table = read_table(dir / "sim/rmse.csv");
  ASSERT_EQ(table.header, (std::vector<std::string>{"dgp", "gamma", "component", "rmse"}));
  ASSERT_EQ(table.rows.size(), 8u);
  std::set<std::string> dgps;
  for (const auto& row : table.rows) dgps.insert(row[0]);
  EXPECT_EQ(dgps, (std::set<std::string>{"stochastic", "deterministic"}));
  ASSERT_EQ(run_cli("simulate -j 1 -c " + cfg, dir / "log"), 0);
  EXPECT_EQ(read_file(dir / "sim/rmse.csv"), first);
  ASSERT_EQ(run_cli("simulate --seed 8 -c " + cfg, dir / "log"), 0);
  EXPECT_NE(read_file(dir / "sim/rmse.csv"), first);
}
