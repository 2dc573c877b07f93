// Acceptance suite: one PASS/FAIL line per criterion.
// Usage: acceptance [criterion...]   (default: all ten)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "str/app/csv.hpp"
#include "str/cv.hpp"
#include "str/estimator.hpp"
#include "str/penalties.hpp"
#include "str/simgen.hpp"
#include "support/cli_helpers.hpp"
#include "support/oracles.hpp"

using namespace str;

namespace {

// Tolerances.
constexpr double operator_tol = 1e-10;
constexpr double eta_tol = 1e-8;
constexpr double leverage_tol = 1e-10;
constexpr double loocv_rel_tol = 1e-7;
constexpr double reconstruction_tol = 1e-10;
constexpr double surface_sum_tol = 1e-8;
constexpr double gls_tol = 1e-10;
constexpr double forecast_tol = 1e-6;
constexpr double cli_sum_tol = 1e-8;
constexpr double band_low = 0.5;
constexpr double band_high = 2.0;

/// Collects failures for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::vector<std::string> notes;
  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

ModelSpec trend_and_cycle(std::size_t n, std::size_t m, Lambdas3 l, double trend) {
  ModelSpec spec;
  spec.trend_lambda = trend;
  spec.seasonals.push_back({"season", make_cycle(m), SeasonMap::cycle(m, n), l});
  return spec;
}

/// Random model with one or two cycles and sometimes a covariate or gaps.
std::pair<ModelSpec, TimeSeriesData> random_model(std::mt19937_64& rng, std::size_t n_max, int rep) {
  std::uniform_real_distribution<double> lam(-1.5, 1.5);
  auto l3 = [&] { return Lambdas3{std::exp(lam(rng)), std::exp(lam(rng)), std::exp(lam(rng))}; };
  const std::size_t n = 8 + rng() % (n_max - 7);
  const std::size_t m = 2 + rng() % 4;
  ModelSpec spec = trend_and_cycle(n, m, l3(), std::exp(lam(rng)));
  if (rep % 3 == 2) spec.seasonals.push_back({"second", make_cycle(m + 1), SeasonMap::cycle(m + 1, n, 1), l3()});
  if (rep % 4 == 1) spec.covariates.push_back({"fix", CovariateKind::fixed, oracle::normals(rng, n)});
  if (rep % 5 == 3) spec.covariates.push_back({"flex", CovariateKind::flexible, oracle::normals(rng, n), std::exp(lam(rng))});
  auto v = oracle::normals(rng, n);
  if (rep % 2 == 0) v[rng() % n] = NAN;
  return {std::move(spec), TimeSeriesData::from_values(v)};
}

void criterion_operators(Check& c) {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> coef(-50, 50);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 3 + rng() % 60;
    const double a = coef(rng), b = coef(rng);
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) y[t] = a + b * static_cast<double>(t);
    for (double v : matvec(build_trend_penalty(n), y)) c.expect(v == 0.0, "trend penalty leaves " + num(v) + " on a line");
  }
  // Surfaces affine in time at every node, summing to zero over nodes.
  for (std::size_t m = 2; m <= 6; ++m) {
    const std::size_t n = 12;
    std::vector<double> a(m), b(m);
    for (std::size_t k = 0; k + 1 < m; ++k) a[k] = coef(rng), b[k] = coef(rng);
    std::vector<double> s(n * (m - 1));
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t k = 0; k + 1 < m; ++k) s[t * (m - 1) + k] = a[k] + b[k] * static_cast<double>(t);
    for (double v : matvec(build_penalties(make_cycle(m), n).tt, s))
      c.expect(v == 0.0, "D_tt leaves " + num(v) + " on an affine surface, m=" + std::to_string(m));
  }
  double worst = 0.0;
  for (std::size_t m = 2; m <= 6; ++m) {
    for (std::size_t n = 3; n <= 20; ++n) {
      const auto p = build_penalties(make_cycle(m), n);
      for (int rep = 0; rep < 3; ++rep) {
        const auto s = oracle::normals(rng, n * (m - 1));
        const auto full = oracle::surface_from_reduced(m, n, s);
        worst = std::max({worst, oracle::max_abs_diff(matvec(p.tt, s), oracle::cycle_tt(full)),
                          oracle::max_abs_diff(matvec(p.st, s), oracle::cycle_st(full)),
                          oracle::max_abs_diff(matvec(p.ss, s), oracle::cycle_ss(full))});
      }
    }
  }
  c.expect(worst <= operator_tol, "surface penalties differ from brute force by " + num(worst));
  c.notes.push_back("max surface difference " + num(worst));
}

void criterion_solver(Check& c) {
  std::mt19937_64 rng(202);
  double worst_eta = 0.0, worst_lev = 0.0;
  std::size_t max_cols = 0;
  for (int rep = 0; rep < 50; ++rep) {
    auto [spec, data] = random_model(rng, 30, rep);
    const auto ds = assemble(spec, data);
    if (ds.x.cols() > 200) continue;
    max_cols = std::max(max_cols, ds.x.cols());
    const auto fit = fit_ols(spec, data);
    const auto x = oracle::from_sparse(ds.x);
    worst_eta = std::max(worst_eta, oracle::max_abs_diff(fit.eta, oracle::least_squares(x, ds.y_plus)));
    auto h = oracle::hat_diagonal(x);
    h.resize(ds.observation_rows());
    worst_lev = std::max(worst_lev, oracle::max_abs_diff(fit.leverages, h));
  }
  c.expect(worst_eta <= eta_tol, "eta differs from dense solve by " + num(worst_eta));
  c.expect(worst_lev <= leverage_tol, "leverages differ from dense hat diagonal by " + num(worst_lev));
  c.notes.push_back("max eta diff " + num(worst_eta) + ", max leverage diff " + num(worst_lev) + ", up to " +
                    std::to_string(max_cols) + " columns");
}

// Leave each observation row out, refit densely and predict it.
double explicit_loocv(const ModelSpec& spec, const TimeSeriesData& data) {
  const auto ds = assemble(spec, data);
  const auto x = oracle::from_sparse(ds.x);
  double cv = 0.0;
  for (std::size_t drop = 0; drop < ds.observation_rows(); ++drop) {
    oracle::Dense xr(x.rows - 1, x.cols);
    std::vector<double> yr;
    for (std::size_t i = 0, k = 0; i < x.rows; ++i) {
      if (i == drop) continue;
      for (std::size_t j = 0; j < x.cols; ++j) xr(k, j) = x(i, j);
      yr.push_back(ds.y_plus[i]);
      ++k;
    }
    const auto eta = oracle::least_squares(xr, yr);
    double pred = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) pred += x(drop, j) * eta[j];
    cv += (ds.y_plus[drop] - pred) * (ds.y_plus[drop] - pred);
  }
  return cv;
}

void criterion_loocv(Check& c) {
  std::mt19937_64 rng(303);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    auto [spec, data] = random_model(rng, 30, rep);
    const double want = explicit_loocv(spec, data);
    const double got = loocv_score(spec, data, CvBackend::sparse);
    worst = std::max(worst, std::abs(got - want) / want);
  }
  c.expect(worst <= loocv_rel_tol, "LOOCV relative error " + num(worst));
  c.notes.push_back("max relative error " + num(worst));
}

void criterion_kfold(Check& c) {
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 1000; ++n)
    for (std::size_t k = 2; k <= 10; ++k)
      for (std::size_t g = 1; g <= 50; ++g) {
        const auto f = kfold_assign(n, k, g);
        ++cases;
        bool ok = f.size() == n;
        for (std::size_t t = 1; ok && t <= n; ++t) ok = f[t - 1] == ((t - 1) % (k * g)) / g;
        if (ok && g == 1)
          for (std::size_t t = 1; ok && t < n; ++t) ok = f[t] != f[t - 1];
        if (!ok) {
          c.failures.push_back("n=" + std::to_string(n) + " K=" + std::to_string(k) + " g=" + std::to_string(g));
          return;
        }
      }
  c.notes.push_back(std::to_string(cases) + " (n, K, g) cases");
}

void criterion_invariants(Check& c) {
  std::mt19937_64 rng(505);
  double worst_sum = 0.0, worst_surface = 0.0;
  int fits = 0;
  for (int rep = 0; rep < 30; ++rep) {
    auto [spec, data] = random_model(rng, 40, rep);
    std::vector<FitResult> results{fit_ols(spec, data), fit_gls(spec, data, NoiseCovariance::ar1(0.4, 2.0))};
    if (rep % 3 == 0) results.push_back(fit_robust(spec, data));
    for (const auto& fit : results) {
      ++fits;
      const auto& k = fit.components;
      for (std::size_t t = 0; t < data.size(); ++t) {
        if (!data.observed(t)) continue;
        double sum = k.trend[t] + k.remainder[t];
        for (const auto& s : k.seasonal) sum += s[t];
        for (const auto& z : k.covariate) sum += z[t];
        worst_sum = std::max(worst_sum, std::abs(*data.y[t] - sum));
      }
      for (const auto& surface : k.seasonal_surfaces)
        for (Eigen::Index t = 0; t < surface.cols(); ++t) worst_surface = std::max(worst_surface, std::abs(surface.col(t).sum()));
    }
  }
  c.expect(worst_sum <= reconstruction_tol, "reconstruction error " + num(worst_sum));
  c.expect(worst_surface <= surface_sum_tol, "seasonal surface column sum " + num(worst_surface));
  c.notes.push_back(std::to_string(fits) + " fits, max reconstruction error " + num(worst_sum) + ", max surface sum " +
                    num(worst_surface));
}

void criterion_simulation(Check& c) {
  // Published reference RMSEs for the stochastic process: trend, weekly, yearly, remainder.
  const std::vector<std::pair<double, std::vector<double>>> targets{
      {0.2, {0.0183, 0.0149, 0.0475, 0.0515}},
      {0.4, {0.0320, 0.0301, 0.0778, 0.0876}},
      {0.6, {0.0523, 0.0438, 0.1136, 0.1273}},
  };
  const auto model = simulation_model(1096);
  auto opts = experiment_options();
  opts.threads = std::max(1u, std::thread::hardware_concurrency());
  double previous_remainder = -1.0;
  for (const auto& [gamma, want] : targets) {
    SimConfig sc;
    sc.dgp = Dgp::stochastic;
    sc.n = 1096;
    sc.gamma = gamma;
    sc.replications = 10;
    sc.seed = 20240601;
    const auto start = std::chrono::steady_clock::now();
    const auto report = rmse_experiment(sc, model, experiment_cv(), opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string line = "gamma=" + num(gamma) + " (" + num(secs) + " s):";
    for (std::size_t i = 0; i < 4; ++i) {
      const double ratio = report.rmse[i] / want[i];
      const bool ok = ratio >= band_low && ratio <= band_high;
      line += " " + rmse_components()[i] + " " + num(report.rmse[i]) + " vs " + num(want[i]) + (ok ? "" : " [out]");
      c.expect(ok, "gamma=" + num(gamma) + " " + rmse_components()[i] + " RMSE " + num(report.rmse[i]) + " is " +
                       num(ratio) + "x the reference " + num(want[i]));
    }
    c.notes.push_back(line);
    c.expect(report.rmse[3] > previous_remainder, "remainder RMSE does not grow at gamma=" + num(gamma));
    previous_remainder = report.rmse[3];
  }
}

void criterion_robust(Check& c) {
  std::mt19937_64 rng(707);
  for (std::size_t n = 1; n <= 41; n += 2) {
    std::vector<double> y(n);
    for (double& v : y) v = std::uniform_int_distribution<int>(-1000, 1000)(rng) / 8.0;
    SparseMatrix ones(n, 1, [&] {
      std::vector<Triplet> t;
      for (std::size_t i = 0; i < n; ++i) t.push_back({i, 0, 1.0});
      return t;
    }());
    const double got = l1_regression(ones, y).eta[0];
    c.expect(got == oracle::median(y), "ones column gives " + num(got) + ", median " + num(oracle::median(y)));
  }
  int instances = 0;
  double worst = -INFINITY;
  for (int rep = 0; rep < 25; ++rep) {
    auto [spec, data] = random_model(rng, 40, rep);
    auto v = oracle::normals(rng, data.size());
    v[rng() % v.size()] += 15.0;
    data = TimeSeriesData::from_values(v);
    const auto ds = assemble(spec, data);
    auto l1 = [&](const std::vector<double>& eta) {
      const auto fitted = matvec(ds.x, eta);
      double s = 0.0;
      for (std::size_t i = 0; i < fitted.size(); ++i) s += std::abs(ds.y_plus[i] - fitted[i]);
      return s;
    };
    const double robust = l1(fit_robust(spec, data).eta);
    const double ols = l1(fit_ols(spec, data).eta);
    worst = std::max(worst, robust - ols);
    c.expect(robust <= ols, "robust L1 " + num(robust) + " above OLS L1 " + num(ols));
    ++instances;
  }
  c.notes.push_back(std::to_string(instances) + " instances, max (robust - OLS) L1 " + num(worst));
}

void criterion_gls(Check& c) {
  std::mt19937_64 rng(808);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    auto [spec, data] = random_model(rng, 30, rep);
    const auto ols = fit_ols(spec, data).eta;
    worst = std::max(worst, oracle::max_abs_diff(fit_gls(spec, data, NoiseCovariance::scaled_identity(1.0)).eta, ols));
    for (double cv : {0.1, 4.0, 100.0})
      worst = std::max(worst, oracle::max_abs_diff(fit_gls(spec, data, NoiseCovariance::scaled_identity(cv)).eta, ols));
  }
  c.expect(worst <= gls_tol, "GLS differs from OLS by " + num(worst));
  c.notes.push_back("max difference " + num(worst));
}

void criterion_forecast(Check& c) {
  std::vector<double> line;
  for (int t = 0; t < 40; ++t) line.push_back(-3.0 + 0.25 * t);
  ModelSpec trend;
  trend.trend_lambda = 5.0;
  const auto a = forecast(trend, TimeSeriesData::from_values(line), 20);
  double worst_line = 0.0;
  for (int h = 0; h < 20; ++h) worst_line = std::max(worst_line, std::abs(a.mean[h] - (-3.0 + 0.25 * (40 + h))));
  c.expect(worst_line < forecast_tol, "affine forecast error " + num(worst_line));

  const std::vector<double> pattern{2.0, -1.0, 0.5, -3.0, 1.5};
  std::vector<double> y;
  for (int t = 0; t < 40; ++t) y.push_back(pattern[t % 5]);
  const auto spec = trend_and_cycle(40, 5, {1e3, 1e3, 0.0}, 1e3);
  const auto b = forecast(spec, TimeSeriesData::from_values(y), 5);
  double worst_cycle = 0.0;
  for (int h = 0; h < 5; ++h) worst_cycle = std::max(worst_cycle, std::abs(b.mean[h] - pattern[(40 + h) % 5]));
  c.expect(worst_cycle < forecast_tol, "periodic forecast error " + num(worst_cycle));
  c.notes.push_back("line error " + num(worst_line) + ", cycle error " + num(worst_cycle));
}

void criterion_cli(Check& c) {
  clitest::TempDir dir;
  std::ostringstream csv;
  csv << "day,y,z\n";
  for (int t = 0; t < 90; ++t) {
    csv << t + 1 << ',';
    if (t % 17 != 5) csv << app::format_number(5.0 + 0.02 * t + std::sin(2.0 * M_PI * t / 7.0) + 0.2 * std::cos(3.1 * t * t));
    csv << ',' << app::format_number(std::cos(0.2 * t)) << '\n';
  }
  clitest::write_file(dir / "data.csv", csv.str());
  clitest::write_file(dir / "run.yaml", R"(input: data.csv
value_column: y
time_column: day
output: out
horizon: 7
model:
  trend: 50
  seasonals:
    - name: weekly
      cycle: 7
      lambdas: [5, 1, 5]
  covariates:
    - column: z
      kind: flexible
      theta: 10
)");
  const auto cfg = (dir / "run.yaml").string();
  std::vector<std::string> outputs;
  for (int run = 0; run < 2; ++run) {
    const bool ok = clitest::run_cli("decompose -c " + cfg, dir / "log") == 0;
    c.expect(ok, "decompose failed: " + clitest::read_file(dir / "log"));
    if (!ok) return;
    outputs.push_back(clitest::read_file(dir / "out/components.csv"));
  }
  c.expect(outputs[0] == outputs[1], "decompose components.csv differs between runs");

  std::istringstream is(outputs[0]);
  const auto table = app::read_csv(is, "components.csv");
  const std::vector<std::string> parts{"trend", "weekly", "z", "remainder"};
  double worst = 0.0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& obs = table.rows[r][*table.column("observed")];
    if (obs.empty()) continue;
    double sum = 0.0;
    for (const auto& p : parts) sum += std::stod(table.rows[r][*table.column(p)]);
    worst = std::max(worst, std::abs(std::stod(obs) - sum));
  }
  c.expect(table.rows.size() == 90, "components.csv has " + std::to_string(table.rows.size()) + " rows");
  c.expect(worst <= cli_sum_tol, "components re-sum error " + num(worst));

  // The covariate needs values over the horizon, so forecast reads seven future rows.
  std::string future = csv.str();
  for (int t = 90; t < 97; ++t) future += std::to_string(t + 1) + ",," + app::format_number(std::cos(0.2 * t)) + "\n";
  clitest::write_file(dir / "data.csv", future);
  std::vector<std::string> forecasts;
  for (int run = 0; run < 2; ++run) {
    const bool ok = clitest::run_cli("forecast -c " + cfg, dir / "log") == 0;
    c.expect(ok, "forecast failed: " + clitest::read_file(dir / "log"));
    if (!ok) return;
    forecasts.push_back(clitest::read_file(dir / "out/forecast.csv") + clitest::read_file(dir / "out/components.csv"));
  }
  c.expect(forecasts[0] == forecasts[1], "forecast CSVs differ between runs");
  c.notes.push_back("max re-sum error " + num(worst));
}

struct Criterion {
  int id;
  const char* title;
  std::function<void(Check&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "operator correctness", criterion_operators},
      {2, "solver-oracle equivalence", criterion_solver},
      {3, "LOOCV identity", criterion_loocv},
      {4, "k-fold assignment", criterion_kfold},
      {5, "reconstruction and constraint invariants", criterion_invariants},
      {6, "simulated RMSE table reproduction", criterion_simulation},
      {7, "robust-fit properties", criterion_robust},
      {8, "GLS reductions", criterion_gls},
      {9, "forecast sanity", criterion_forecast},
      {10, "CLI determinism and round trip", criterion_cli},
  };
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) {
    try {
      chosen.insert(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::cerr << "usage: acceptance [criterion...]\n";
      return 2;
    }
  }
  int failed = 0;
  for (const auto& crit : all) {
    if (!chosen.empty() && !chosen.count(crit.id)) continue;
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      crit.run(check);
    } catch (const std::exception& e) {
      check.failures.push_back(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = check.failures.empty();
    failed += pass ? 0 : 1;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << crit.id << ": " << crit.title << " (" << num(secs)
              << " s)\n";
    for (const auto& n : check.notes) std::cout << "    " << n << '\n';
    for (const auto& f : check.failures) std::cout << "    failed: " << f << '\n';
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
