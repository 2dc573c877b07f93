#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "str/app/config.hpp"
#include "str/app/csv.hpp"
#include "str/app/svg.hpp"
#include "str/cv.hpp"
#include "str/errors.hpp"
#include "str/estimator.hpp"
#include "str/model.hpp"
#include "str/simgen.hpp"

namespace str::app {

enum ExitCode : int { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_data = 3, exit_numerical = 4 };

/// Runs `body`, printing a one-line diagnostic for library errors and mapping
/// them to the documented exit codes.
inline int guarded(const std::function<void()>& body, std::ostream& err = std::cerr) {
  try {
    body();
    return exit_ok;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return exit_config;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return exit_data;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return exit_numerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_failure;
  }
}

/// Options shared by every subcommand, usually from the command line.
struct RunOptions {
  std::optional<std::filesystem::path> output;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  int verbosity = 0;
  std::ostream* log = &std::cerr;
};

/// Input series plus everything needed to build the model.
struct LoadedInput {
  CsvTable table;
  TimeSeriesData data;
  /// Time labels for every CSV row.
  std::vector<std::string> labels;
  /// Rows after the series used only for future covariates and season maps.
  std::size_t future_rows = 0;
};

inline bool needs_future_rows(const RunConfig& cfg) {
  if (!cfg.covariates.empty()) return true;
  for (const auto& s : cfg.seasonals)
    if (!s.cycle) return true;
  return false;
}

/// Reads the input CSV. With `horizon` > 0 and covariates or graph
/// topologies, the last `horizon` rows are future rows whose value cells must be blank.
inline LoadedInput load_input(const RunConfig& cfg, std::size_t horizon) {
  if (cfg.input.empty()) throw ConfigError("no 'input' file given");
  LoadedInput in;
  in.table = read_csv_file(cfg.input);
  const std::string src = cfg.input.string();
  auto values = numeric_column(in.table, cfg.value_column, src);
  const std::size_t rows = values.size();
  if (horizon > 0 && needs_future_rows(cfg)) {
    if (rows <= horizon) throw DataError(src + ": " + std::to_string(rows) + " rows cannot hold a horizon of " + std::to_string(horizon));
    for (std::size_t r = rows - horizon; r < rows; ++r) {
      if (values[r]) {
        throw DataError(src + ":" + std::to_string(in.table.lines[r]) + ": future row has a value; the last " +
                        std::to_string(horizon) + " rows must leave '" + cfg.value_column + "' blank");
      }
    }
    in.future_rows = horizon;
    values.resize(rows - horizon);
  }
  if (cfg.log_transform) {
    for (std::size_t r = 0; r < values.size(); ++r) {
      if (values[r] && !(*values[r] > 0.0)) {
        throw DataError(src + ":" + std::to_string(in.table.lines[r]) + ": log transform needs positive values");
      }
      if (values[r]) values[r] = std::log(*values[r]);
    }
  }
  in.data.y = std::move(values);
  in.data.validate();

  std::optional<std::size_t> tcol;
  if (!cfg.time_column.empty()) {
    tcol = in.table.column(cfg.time_column);
    if (!tcol) throw DataError(src + ": no column named '" + cfg.time_column + "'");
  }
  for (std::size_t r = 0; r < rows; ++r) in.labels.push_back(tcol ? in.table.rows[r][*tcol] : std::to_string(r + 1));
  return in;
}

/// Model from the config; "auto" parameters get placeholder value 1.
inline ModelSpec build_model(const RunConfig& cfg, const LoadedInput& in) {
  const std::size_t rows = in.table.rows.size();
  const std::size_t n = in.data.size();
  const std::string src = cfg.input.string();
  ModelSpec spec;
  spec.trend_lambda = cfg.trend.automatic ? 1.0 : cfg.trend.value;
  auto triple = [](const std::array<LambdaSetting, 3>& l) {
    return Lambdas3{l[0].automatic ? 1.0 : l[0].value, l[1].automatic ? 1.0 : l[1].value,
                    l[2].automatic ? 1.0 : l[2].value};
  };
  for (const auto& s : cfg.seasonals) {
    SeasonalSpec ss;
    ss.name = s.name;
    ss.lambdas = triple(s.lambdas);
    if (s.cycle) {
      ss.topology = make_cycle(*s.cycle);
      ss.map = SeasonMap::cycle(*s.cycle, n, s.phase);
    } else {
      ss.topology = SeasonTopology::from_edges(s.nodes, s.edges);
      const auto col = numeric_column(in.table, s.map_column, src);
      std::vector<NodeId> assignment(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto& v = col[r];
        if (!v || *v < 0.0 || std::floor(*v) != *v) {
          throw DataError(src + ":" + std::to_string(in.table.lines[r]) + ": season map column '" + s.map_column +
                          "' needs a non-negative integer node");
        }
        assignment[r] = static_cast<NodeId>(*v);
      }
      ss.map = SeasonMap::explicit_assignment(std::move(assignment));
    }
    spec.seasonals.push_back(std::move(ss));
  }
  for (const auto& c : cfg.covariates) {
    CovariateSpec cs;
    cs.name = c.name;
    cs.kind = c.kind;
    const auto col = numeric_column(in.table, c.column, src);
    cs.values.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!col[r]) {
        throw DataError(src + ":" + std::to_string(in.table.lines[r]) + ": covariate column '" + c.column +
                        "' has a missing value");
      }
      cs.values[r] = *col[r];
    }
    cs.theta = c.theta.automatic ? 1.0 : c.theta.value;
    cs.thetas = triple(c.thetas);
    if (c.kind == CovariateKind::seasonal) {
      for (std::size_t i = 0; i < cfg.seasonals.size(); ++i)
        if (cfg.seasonals[i].name == c.season) cs.season_ref = i;
    }
    spec.covariates.push_back(std::move(cs));
  }
  return spec;
}

/// Names of the "auto" slots in lambda_slots order.
inline std::vector<std::string> automatic_slots(const RunConfig& cfg, const ModelSpec& spec) {
  std::vector<std::string> names;
  for (const auto& slot : lambda_slots(spec)) {
    bool automatic = false;
    switch (slot.target) {
      case LambdaSlot::Target::trend:
        automatic = cfg.trend.automatic;
        break;
      case LambdaSlot::Target::seasonal:
        automatic = cfg.seasonals[slot.index].lambdas[static_cast<std::size_t>(slot.component)].automatic;
        break;
      case LambdaSlot::Target::flexible:
        automatic = cfg.covariates[slot.index].theta.automatic;
        break;
      case LambdaSlot::Target::seasonal_covariate:
        automatic = cfg.covariates[slot.index].thetas[static_cast<std::size_t>(slot.component)].automatic;
        break;
    }
    if (automatic) names.push_back(slot.name);
  }
  return names;
}

/// Fills "auto" parameters by cross-validation; returns nullopt when none are automatic.
inline std::optional<CvResult> select_lambdas(const RunConfig& cfg, ModelSpec& spec, const TimeSeriesData& data) {
  const auto free = automatic_slots(cfg, spec);
  if (free.empty()) return std::nullopt;
  CvConfig cv = cfg.cv;
  cv.free = free;
  cv.initial.assign(free.size(), 0.0);
  for (const auto& [name, value] : cfg.cv_initial) {
    auto it = std::find(free.begin(), free.end(), name);
    if (it == free.end()) throw ConfigError("cv.initial names '" + name + "', which is not an 'auto' parameter");
    cv.initial[static_cast<std::size_t>(it - free.begin())] = value;
  }
  CvResult res = optimize_lambdas(spec, data, cv);
  spec = res.spec;
  return res;
}

inline NoiseCovariance noise_covariance(const RunConfig& cfg, const LoadedInput& in) {
  switch (cfg.noise.kind) {
    case NoiseConfig::Kind::identity:
      return NoiseCovariance::scaled_identity(cfg.noise.variance);
    case NoiseConfig::Kind::ar1:
      return NoiseCovariance::ar1(cfg.noise.rho, cfg.noise.variance);
    case NoiseConfig::Kind::diagonal: {
      const auto col = numeric_column(in.table, cfg.noise.column, cfg.input.string());
      std::vector<double> v(col.size(), 1.0);
      for (std::size_t r = 0; r < in.data.size(); ++r) {
        if (in.data.observed(r) && (!col[r] || !(*col[r] > 0.0))) {
          throw DataError(cfg.input.string() + ":" + std::to_string(in.table.lines[r]) +
                          ": noise variance must be positive at every observed row");
        }
        if (col[r]) v[r] = *col[r];
      }
      return NoiseCovariance::diagonal(std::move(v));
    }
  }
  return NoiseCovariance::scaled_identity(1.0);
}

inline FitResult fit_model(const RunConfig& cfg, const ModelSpec& spec, const LoadedInput& in) {
  switch (cfg.fit) {
    case FitKind::ols:
      return fit_ols(spec, in.data);
    case FitKind::gls:
      return fit_gls(spec, in.data, noise_covariance(cfg, in));
    case FitKind::robust: {
      RobustOptions ro;
      ro.max_iterations = cfg.robust_max_iterations;
      return fit_robust(spec, in.data, ro);
    }
  }
  throw ConfigError("unknown fit kind");
}

/// Components table: time, observed, trend, seasonals, covariates, remainder,
/// then lower/upper bounds of trend and seasonals when the fit has a covariance.
inline void write_components_csv(std::ostream& os, const ModelSpec& spec, const FitResult& fit,
                                 const TimeSeriesData& data, const std::vector<std::string>& labels, double level) {
  const auto& c = fit.components;
  const bool bands = fit.has_covariance && !fit.trend_variance.empty();
  std::optional<ComponentIntervals> ci;
  if (bands) ci = confidence_intervals(fit, level);
  os << "time,observed,trend";
  for (const auto& s : spec.seasonals) os << ',' << quote_cell(s.name);
  for (const auto& z : spec.covariates) os << ',' << quote_cell(z.name);
  os << ",remainder";
  if (bands) {
    os << ",trend_lower,trend_upper";
    for (const auto& s : spec.seasonals) os << ',' << quote_cell(s.name + "_lower") << ',' << quote_cell(s.name + "_upper");
  }
  os << '\n';
  for (std::size_t t = 0; t < data.size(); ++t) {
    os << quote_cell(t < labels.size() ? labels[t] : std::to_string(t + 1)) << ',' << format_optional(data.y[t]) << ','
       << format_number(c.trend[t]);
    for (const auto& s : c.seasonal) os << ',' << format_number(s[t]);
    for (const auto& z : c.covariate) os << ',' << format_number(z[t]);
    os << ',' << (data.observed(t) ? format_number(c.remainder[t]) : std::string());
    if (bands) {
      os << ',' << format_number(ci->trend.lower[t]) << ',' << format_number(ci->trend.upper[t]);
      for (const auto& iv : ci->seasonal) os << ',' << format_number(iv.lower[t]) << ',' << format_number(iv.upper[t]);
    }
    os << '\n';
  }
}

inline nlohmann::ordered_json lambda_report(const ModelSpec& spec, const FitResult& fit,
                                            const std::optional<CvResult>& cv, const RunConfig& cfg) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json lambdas = nlohmann::ordered_json::object();
  for (const auto& slot : lambda_slots(spec)) lambdas[slot.name] = lambda_value(spec, slot);
  j["lambdas"] = lambdas;
  const char* kind = fit.kind == FitKind::ols ? "ols" : fit.kind == FitKind::gls ? "gls" : "robust";
  j["fit"] = kind;
  j["sigma_r"] = fit.sigma_r;
  j["effective_dof"] = fit.effective_dof;
  j["log_transform"] = cfg.log_transform;
  if (cv) {
    nlohmann::ordered_json c;
    c["mode"] = cfg.cv.mode == CvMode::loocv ? "loocv" : "kfold";
    if (cfg.cv.mode == CvMode::kfold) {
      c["folds"] = cfg.cv.folds;
      c["gap"] = cfg.cv.gap;
    }
    c["score"] = cv->score;
    c["evaluations"] = cv->trace.size();
    c["converged"] = cv->converged;
    c["backend"] = cv->used_kernel ? "cycle_kernel" : "sparse";
    nlohmann::ordered_json logs = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < cv->best.names.size(); ++i) logs[cv->best.names[i]] = cv->best.log_values[i];
    c["log_lambdas"] = logs;
    j["cv"] = c;
  }
  if (!fit.warnings.empty()) j["warnings"] = fit.warnings;
  return j;
}

/// Times of the `count` largest absolute remainders, in time order.
inline std::vector<std::size_t> largest_remainders(const std::vector<double>& remainder, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < remainder.size(); ++t)
    if (std::isfinite(remainder[t])) idx.push_back(t);
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), [&](std::size_t a, std::size_t b) {
    const double x = std::abs(remainder[a]), y = std::abs(remainder[b]);
    return x != y ? x > y : a < b;
  });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline std::vector<PlotPanel> decomposition_panels(const ModelSpec& spec, const FitResult& fit,
                                                   const TimeSeriesData& data, double level) {
  const auto& c = fit.components;
  std::optional<ComponentIntervals> ci;
  if (fit.has_covariance && !fit.trend_variance.empty()) ci = confidence_intervals(fit, level);
  auto dense = [](const std::vector<double>& v) {
    std::vector<std::optional<double>> out;
    for (double x : v) out.push_back(std::isfinite(x) ? std::optional<double>(x) : std::nullopt);
    return out;
  };
  std::vector<PlotPanel> panels;
  panels.push_back({"data", data.y, {}, {}});
  panels.push_back({"trend", dense(c.trend), ci ? ci->trend.lower : std::vector<double>{},
                    ci ? ci->trend.upper : std::vector<double>{}});
  for (std::size_t i = 0; i < spec.seasonals.size(); ++i) {
    panels.push_back({spec.seasonals[i].name, dense(c.seasonal[i]), ci ? ci->seasonal[i].lower : std::vector<double>{},
                      ci ? ci->seasonal[i].upper : std::vector<double>{}});
  }
  for (std::size_t j = 0; j < spec.covariates.size(); ++j) panels.push_back({spec.covariates[j].name, dense(c.covariate[j]), {}, {}});
  panels.push_back({"remainder", dense(c.remainder), {}, {}});
  return panels;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write '" + path.string() + "'");
  return os;
}

inline std::filesystem::path output_dir(const RunConfig& cfg, const RunOptions& opt) {
  const auto dir = opt.output ? *opt.output : cfg.output;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

inline std::string short_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline void log_line(const RunOptions& opt, int level, const std::string& msg) {
  if (opt.verbosity >= level && opt.log) *opt.log << msg << '\n';
}

}  // namespace detail

/// Files written by a run.
struct RunArtifacts {
  std::vector<std::filesystem::path> files;
};

/// Decomposition: components.csv, lambdas.json, decomposition.svg and, when
/// parameters were selected, cv_trace.csv.
inline RunArtifacts run_decompose(const RunConfig& cfg, const RunOptions& opt = {}) {
  const LoadedInput in = load_input(cfg, 0);
  ModelSpec spec = build_model(cfg, in);
  spec.validate(in.data.size());
  const auto dir = detail::output_dir(cfg, opt);
  RunArtifacts out;

  const auto cv = select_lambdas(cfg, spec, in.data);
  if (cv) {
    detail::log_line(opt, 1, "cross-validation: score " + format_number(cv->score) + " after " +
                                 std::to_string(cv->trace.size()) + " evaluations");
    auto os = detail::open_output(dir / "cv_trace.csv");
    write_trace_csv(os, *cv);
    out.files.push_back(dir / "cv_trace.csv");
  }
  const FitResult fit = fit_model(cfg, spec, in);
  for (const auto& w : fit.warnings) detail::log_line(opt, 0, "warning: " + w);
  {
    auto os = detail::open_output(dir / "components.csv");
    write_components_csv(os, spec, fit, in.data, in.labels, cfg.level);
    out.files.push_back(dir / "components.csv");
  }
  {
    auto os = detail::open_output(dir / "lambdas.json");
    os << lambda_report(spec, fit, cv, cfg).dump(2) << '\n';
    out.files.push_back(dir / "lambdas.json");
  }
  {
    auto os = detail::open_output(dir / "decomposition.svg");
    write_svg(os, decomposition_panels(spec, fit, in.data, cfg.level),
              largest_remainders(fit.components.remainder, cfg.outlier_marks));
    out.files.push_back(dir / "decomposition.svg");
  }
  detail::log_line(opt, 1, "wrote " + std::to_string(out.files.size()) + " files to " + dir.string());
  return out;
}

/// Forecast: forecast.csv (time, mean, lower, upper), components.csv over the
/// extended series, and lambdas.json.
inline RunArtifacts run_forecast(const RunConfig& cfg, const RunOptions& opt = {}) {
  if (cfg.horizon == 0) throw ConfigError("forecast needs 'horizon' >= 1");
  if (cfg.fit != FitKind::ols) throw ConfigError("forecast supports fit 'ols' only");
  const LoadedInput in = load_input(cfg, cfg.horizon);
  ModelSpec spec = build_model(cfg, in);
  spec.validate(in.data.size());
  const auto dir = detail::output_dir(cfg, opt);
  RunArtifacts out;

  const auto cv = select_lambdas(cfg, spec, in.data);
  const ForecastResult fc = forecast(spec, in.data, cfg.horizon, cfg.level);
  const std::size_t total = in.data.size() + cfg.horizon;
  std::vector<std::string> labels = in.labels;
  for (std::size_t t = labels.size(); t < total; ++t) labels.push_back(std::to_string(t + 1));

  {
    auto os = detail::open_output(dir / "forecast.csv");
    os << "time,mean,lower,upper";
    if (cfg.log_transform) os << ",exp_mean,exp_lower,exp_upper";
    os << '\n';
    for (std::size_t h = 0; h < fc.horizon; ++h) {
      os << quote_cell(labels[fc.first_future + h]) << ',' << format_number(fc.mean[h]) << ','
         << format_number(fc.lower[h]) << ',' << format_number(fc.upper[h]);
      if (cfg.log_transform) {
        os << ',' << format_number(std::exp(fc.mean[h])) << ',' << format_number(std::exp(fc.lower[h])) << ','
           << format_number(std::exp(fc.upper[h]));
      }
      os << '\n';
    }
    out.files.push_back(dir / "forecast.csv");
  }
  ModelSpec extended = spec;
  for (auto& s : extended.seasonals) s.map = s.map.extended(total);
  const TimeSeriesData ext = in.data.extended(cfg.horizon);
  {
    auto os = detail::open_output(dir / "components.csv");
    write_components_csv(os, extended, fc.fit, ext, labels, cfg.level);
    out.files.push_back(dir / "components.csv");
  }
  {
    auto os = detail::open_output(dir / "lambdas.json");
    auto j = lambda_report(spec, fc.fit, cv, cfg);
    j["horizon"] = cfg.horizon;
    os << j.dump(2) << '\n';
    out.files.push_back(dir / "lambdas.json");
  }
  {
    auto os = detail::open_output(dir / "forecast.svg");
    write_svg(os, decomposition_panels(extended, fc.fit, ext, cfg.level), {});
    out.files.push_back(dir / "forecast.svg");
  }
  return out;
}

/// Simulation study: rmse.csv (dgp, gamma, component, rmse) and
/// replications.csv with the per-replication errors and selected lambdas.
inline RunArtifacts run_simulate(const RunConfig& cfg, const RunOptions& opt = {}) {
  const auto& sim = cfg.simulate;
  const auto dir = detail::output_dir(cfg, opt);
  const ModelSpec model = simulation_model(sim.n);
  CvConfig cv = experiment_cv();
  if (cfg.has_cv) {
    cv = cfg.cv;
    if (!cfg.cv_initial.empty()) {
      const auto slots = lambda_slots(model);
      cv.initial.assign(slots.size(), 0.0);
      for (const auto& [name, value] : cfg.cv_initial) {
        auto it = std::find_if(slots.begin(), slots.end(), [&](const LambdaSlot& s) { return s.name == name; });
        if (it == slots.end()) throw ConfigError("cv.initial names unknown parameter '" + name + "'");
        cv.initial[static_cast<std::size_t>(it - slots.begin())] = value;
      }
    }
  }
  ExperimentOptions eo;
  eo.pilot = sim.pilot;
  eo.warm_step = sim.warm_step;
  eo.warm_max_evaluations = sim.warm_max_evaluations;
  eo.warm_restarts = sim.warm_restarts;
  eo.threads = opt.threads;

  std::vector<RmseReport> reports;
  for (Dgp dgp : sim.dgps) {
    for (double gamma : sim.gammas) {
      SimConfig sc;
      sc.dgp = dgp;
      sc.n = sim.n;
      sc.alpha = sim.alpha;
      sc.beta = sim.beta;
      sc.gamma = gamma;
      sc.replications = sim.replications;
      sc.seed = opt.seed ? *opt.seed : sim.seed;
      std::mutex mu;
      eo.on_replication = [&](const ReplicationResult& rr) {
        std::lock_guard lock(mu);
        detail::log_line(opt, 1, std::string(dgp_name(dgp)) + " gamma=" + detail::short_number(gamma) + " replication " +
                                     std::to_string(rr.replication) + ": cv " + format_number(rr.cv_score) + " (" +
                                     std::to_string(rr.evaluations) + " evaluations)");
      };
      reports.push_back(rmse_experiment(sc, model, cv, eo));
    }
  }
  RunArtifacts out;
  {
    auto os = detail::open_output(dir / "rmse.csv");
    write_rmse_csv(os, reports);
    out.files.push_back(dir / "rmse.csv");
  }
  {
    auto os = detail::open_output(dir / "replications.csv");
    os << "dgp,gamma,replication,points,sse_trend,sse_weekly,sse_yearly,sse_remainder,cv_score,evaluations";
    for (const auto& slot : lambda_slots(model)) os << ",log_" << slot.name;
    os << '\n';
    for (const auto& r : reports) {
      for (const auto& rr : r.replications) {
        os << dgp_name(r.dgp) << ',' << format_number(r.gamma) << ',' << rr.replication << ',' << rr.points;
        for (double s : rr.sse) os << ',' << format_number(s);
        os << ',' << format_number(rr.cv_score) << ',' << rr.evaluations;
        for (double v : rr.lambdas.log_values) os << ',' << format_number(v);
        os << '\n';
      }
    }
    out.files.push_back(dir / "replications.csv");
  }
  return out;
}

}  // namespace str::app
