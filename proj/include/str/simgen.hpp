#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "str/cv.hpp"
#include "str/cycle_kernel.hpp"
#include "str/errors.hpp"
#include "str/estimator.hpp"
#include "str/model.hpp"

namespace str {

enum class Dgp { deterministic, stochastic };

inline const char* dgp_name(Dgp d) { return d == Dgp::deterministic ? "deterministic" : "stochastic"; }

struct SimConfig {
  Dgp dgp = Dgp::stochastic;
  std::size_t n = 1096;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.2;
  std::size_t replications = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (n < 14) throw ConfigError("simulation needs n >= 14, got " + std::to_string(n));
    if (replications < 1) throw ConfigError("simulation needs at least one replication");
  }
};

inline constexpr std::size_t weekly_period = 7;
inline constexpr std::size_t yearly_period = 365;

/// One simulated series with its unscaled components.
struct SimInstance {
  std::vector<double> y;
  std::vector<double> trend;
  std::vector<double> weekly;
  std::vector<double> yearly;
  std::vector<double> remainder;
};

/// Generator for replication `r` of master seed `seed`.
inline std::mt19937_64 replication_engine(std::uint64_t seed, std::uint64_t r) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
  return std::mt19937_64(seq);
}

/// Shift and scale to sample mean 0 and sample variance 1 (n - 1 denominator).
inline void normalize(std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double& v : x) {
    v -= mean;
    ss += v * v;
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd > 0.0)
    for (double& v : x) v /= sd;
}

namespace detail {

inline std::vector<double> draw_normals(std::mt19937_64& rng, std::size_t count) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> v(count);
  for (double& x : v) x = z(rng);
  return v;
}

inline void cumulative_sum(std::vector<double>& x) {
  double s = 0.0;
  for (double& v : x) {
    s += v;
    v = s;
  }
}

inline void mix(SimInstance& s, const SimConfig& cfg) {
  s.y.resize(cfg.n);
  for (std::size_t t = 0; t < cfg.n; ++t)
    s.y[t] = s.trend[t] + cfg.alpha * s.weekly[t] + cfg.beta * s.yearly[t] + cfg.gamma * s.remainder[t];
}

/// Periodic base of one season, integrated twice while staying periodic.
inline std::vector<double> stochastic_seasonal(std::vector<double> base, std::size_t n) {
  const std::size_t p = base.size();
  normalize(base);
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = base[t % p];
  cumulative_sum(x);
  // Centre on the mean over one period so the second integration adds no drift.
  // The first period of the running sum is the running sum of the base.
  std::vector<double> first = base;
  cumulative_sum(first);
  const double period_mean = std::accumulate(first.begin(), first.end(), 0.0) / static_cast<double>(p);
  double ss = 0.0;
  for (double& v : x) {
    v -= period_mean;
    ss += v * v;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  for (double& v : x) v /= sd;
  cumulative_sum(x);
  normalize(x);
  return x;
}

inline std::vector<double> fourier_seasonal(const std::vector<double>& coef, std::size_t period, std::size_t n) {
  std::vector<double> x(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>((t + 1) % period) / static_cast<double>(period);
    double v = 0.0;
    for (std::size_t k = 1; k <= 5; ++k) {
      v += coef[2 * (k - 1)] * std::sin(static_cast<double>(k) * phase) +
           coef[2 * (k - 1) + 1] * std::cos(static_cast<double>(k) * phase);
    }
    x[t] = v;
  }
  normalize(x);
  return x;
}

}  // namespace detail

/// Twice-integrated noise trend and smooth periodic seasonals.
/// Draw order: trend noise (n), weekly base (7), yearly base (365), remainder (n).
inline SimInstance gen_stochastic(const SimConfig& cfg, std::uint64_t replication = 0) {
  cfg.validate();
  auto rng = replication_engine(cfg.seed, replication);
  SimInstance s;
  s.trend = detail::draw_normals(rng, cfg.n);
  detail::cumulative_sum(s.trend);
  detail::cumulative_sum(s.trend);
  normalize(s.trend);
  s.weekly = detail::stochastic_seasonal(detail::draw_normals(rng, weekly_period), cfg.n);
  s.yearly = detail::stochastic_seasonal(detail::draw_normals(rng, yearly_period), cfg.n);
  s.remainder = detail::draw_normals(rng, cfg.n);
  detail::mix(s, cfg);
  return s;
}

/// Random quadratic trend N1 (t + n/2 (N2 - 1))^2 and five Fourier harmonics per season.
/// Draw order: N1, N2, weekly coefficients (10), yearly coefficients (10), remainder (n).
inline SimInstance gen_deterministic(const SimConfig& cfg, std::uint64_t replication = 0) {
  cfg.validate();
  auto rng = replication_engine(cfg.seed, replication);
  const auto n12 = detail::draw_normals(rng, 2);
  SimInstance s;
  s.trend.resize(cfg.n);
  const double half = static_cast<double>(cfg.n) / 2.0;
  for (std::size_t t = 0; t < cfg.n; ++t) {
    const double u = static_cast<double>(t + 1) + half * (n12[1] - 1.0);
    s.trend[t] = n12[0] * u * u;
  }
  normalize(s.trend);
  s.weekly = detail::fourier_seasonal(detail::draw_normals(rng, 10), weekly_period, cfg.n);
  s.yearly = detail::fourier_seasonal(detail::draw_normals(rng, 10), yearly_period, cfg.n);
  s.remainder = detail::draw_normals(rng, cfg.n);
  detail::mix(s, cfg);
  return s;
}

inline SimInstance generate(const SimConfig& cfg, std::uint64_t replication = 0) {
  return cfg.dgp == Dgp::stochastic ? gen_stochastic(cfg, replication) : gen_deterministic(cfg, replication);
}

/// Trend plus weekly (cycle 7) and yearly (cycle 365) seasonal components, all lambdas 1.
inline ModelSpec simulation_model(std::size_t n) {
  ModelSpec spec;
  spec.trend_lambda = 1.0;
  spec.seasonals.push_back({"weekly", make_cycle(weekly_period), SeasonMap::cycle(weekly_period, n), {1.0, 1.0, 1.0}});
  spec.seasonals.push_back({"yearly", make_cycle(yearly_period), SeasonMap::cycle(yearly_period, n), {1.0, 1.0, 1.0}});
  return spec;
}

inline const std::vector<std::string>& rmse_components() {
  static const std::vector<std::string> names{"trend", "weekly", "yearly", "remainder"};
  return names;
}

struct ReplicationResult {
  std::size_t replication = 0;
  /// Sums of squared errors per component (trend, weekly, yearly, remainder).
  std::vector<double> sse;
  std::size_t points = 0;
  LambdaPoint lambdas;
  double cv_score = 0.0;
  std::size_t evaluations = 0;
};

struct RmseReport {
  Dgp dgp = Dgp::stochastic;
  double gamma = 0.0;
  /// Pooled over days and replications, in rmse_components() order.
  std::vector<double> rmse;
  std::vector<ReplicationResult> replications;
};

struct ExperimentOptions {
  /// Search a pilot series first and start every replication from its optimum.
  bool pilot = true;
  /// Initial simplex step for searches started from the pilot optimum.
  double warm_step = 0.5;
  /// Evaluation budget and restarts of those searches; zero budget keeps the CvConfig value.
  std::size_t warm_max_evaluations = 0;
  std::size_t warm_restarts = 0;
  std::size_t threads = 1;
  std::function<void(const ReplicationResult&)> on_replication;
};

/// LOOCV search used for the simulation model. The start keeps the trend and
/// both seasonal surfaces stiff in time so the trend does not absorb the
/// yearly cycle on the first simplex.
inline CvConfig experiment_cv() {
  CvConfig cv;
  cv.mode = CvMode::loocv;
  cv.initial = {5.0, 5.0, 0.0, 5.0, 5.0, 0.0, 5.0};
  cv.optimizer.initial_step = 2.0;
  cv.optimizer.tolerance = 1e-5;
  cv.optimizer.restarts = 3;
  cv.optimizer.max_evaluations = 400;
  return cv;
}

inline ExperimentOptions experiment_options() {
  ExperimentOptions opts;
  opts.pilot = true;
  opts.warm_step = 0.5;
  opts.warm_max_evaluations = 150;
  opts.warm_restarts = 1;
  return opts;
}

namespace detail {

/// Replication index reserved for the pilot series.
inline constexpr std::uint64_t pilot_replication = 0xFFFFFFFFull;

inline Components fit_components(const ModelSpec& spec, const TimeSeriesData& data, bool kernel) {
  if (kernel) {
    const KernelFit kf = kernel_fit(spec, data, nullptr, false);
    Components c;
    c.trend = kf.trend;
    c.seasonal = kf.seasonal;
    c.fitted = kf.fitted;
    c.remainder = kf.remainder;
    return c;
  }
  FitOptions fo;
  fo.coefficient_variances = false;
  fo.component_variances = false;
  return fit_ols(spec, data, fo).components;
}

}  // namespace detail

/// Decomposes `replications` simulated series with cross-validated lambdas
/// and pools the squared component errors. Seasonal 0 of `model` is scored
/// against the weekly truth and seasonal 1 against the yearly truth.
inline RmseReport rmse_experiment(const SimConfig& cfg, const ModelSpec& model, const CvConfig& cv,
                                  const ExperimentOptions& opts = {}) {
  cfg.validate();
  if (model.seasonals.size() != 2) throw ConfigError("simulation model needs exactly two seasonal components");

  CvConfig run_cv = cv;
  if (opts.pilot) {
    const SimInstance pilot = generate(cfg, detail::pilot_replication);
    const CvResult pr = optimize_lambdas(model, TimeSeriesData::from_values(pilot.y), cv);
    run_cv.initial = pr.best.log_values;
    run_cv.optimizer.initial_step = opts.warm_step;
    run_cv.optimizer.restarts = opts.warm_restarts;
    if (opts.warm_max_evaluations > 0) run_cv.optimizer.max_evaluations = opts.warm_max_evaluations;
  }

  RmseReport report;
  report.dgp = cfg.dgp;
  report.gamma = cfg.gamma;
  report.replications.resize(cfg.replications);

  auto run_one = [&](std::size_t r) {
    const SimInstance inst = generate(cfg, r);
    const TimeSeriesData data = TimeSeriesData::from_values(inst.y);
    CvResult cr;
    try {
      cr = optimize_lambdas(model, data, run_cv);
    } catch (const Error& e) {
      throw NumericalError("replication " + std::to_string(r) + ": " + e.what());
    }
    Components c;
    try {
      c = detail::fit_components(cr.spec, data, cr.used_kernel);
    } catch (const Error& e) {
      throw NumericalError("replication " + std::to_string(r) + ": " + e.what());
    }
    ReplicationResult rr;
    rr.replication = r;
    rr.sse.assign(4, 0.0);
    rr.points = cfg.n;
    for (std::size_t t = 0; t < cfg.n; ++t) {
      const double e[4] = {c.trend[t] - inst.trend[t], c.seasonal[0][t] - cfg.alpha * inst.weekly[t],
                           c.seasonal[1][t] - cfg.beta * inst.yearly[t], c.remainder[t] - cfg.gamma * inst.remainder[t]};
      for (int k = 0; k < 4; ++k) rr.sse[static_cast<std::size_t>(k)] += e[k] * e[k];
    }
    rr.lambdas = cr.best;
    rr.cv_score = cr.score;
    rr.evaluations = cr.trace.size();
    return rr;
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, cfg.replications));
  std::mutex mu;
  if (threads == 1) {
    for (std::size_t r = 0; r < cfg.replications; ++r) {
      report.replications[r] = run_one(r);
      if (opts.on_replication) opts.on_replication(report.replications[r]);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t r; (r = next.fetch_add(1)) < cfg.replications;) {
          try {
            auto rr = run_one(r);
            std::lock_guard lock(mu);
            report.replications[r] = std::move(rr);
            if (opts.on_replication) opts.on_replication(report.replications[r]);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
            next = cfg.replications;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  report.rmse.assign(4, 0.0);
  std::size_t points = 0;
  for (const auto& rr : report.replications) {
    for (std::size_t k = 0; k < 4; ++k) report.rmse[k] += rr.sse[k];
    points += rr.points;
  }
  for (double& v : report.rmse) v = std::sqrt(v / static_cast<double>(points));
  return report;
}

/// Rows "dgp,gamma,component,rmse" for each report.
inline void write_rmse_csv(std::ostream& os, const std::vector<RmseReport>& reports) {
  os << "dgp,gamma,component,rmse\n";
  for (const auto& r : reports) {
    for (std::size_t k = 0; k < 4; ++k) {
      os << dgp_name(r.dgp) << ',' << std::setprecision(6) << r.gamma << ',' << rmse_components()[k] << ','
         << std::setprecision(17) << r.rmse[k] << '\n';
    }
  }
}

}  // namespace str
