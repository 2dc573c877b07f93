#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "str/cycle_kernel.hpp"
#include "str/errors.hpp"
#include "str/linear_solver.hpp"
#include "str/model.hpp"
#include "str/nelder_mead.hpp"

namespace str {

/// Leverages at or above this are treated as saturated.
inline constexpr double saturation_threshold = 1.0 - 1e-8;

enum class CvMode { loocv, kfold };

/// Which solver scores a candidate: the sparse stacked system or the dense
/// covariance form (cycles without covariates only).
enum class CvBackend { automatic, sparse, cycle_kernel };

/// One smoothing parameter of the model, in the order of the Lambda set:
/// seasonal triples, trend, flexible thetas, seasonal-covariate triples.
struct LambdaSlot {
  enum class Target { seasonal, trend, flexible, seasonal_covariate };
  Target target = Target::trend;
  std::size_t index = 0;
  /// 0 = tt, 1 = st, 2 = ss for triples.
  int component = 0;
  std::string name;
};

inline std::vector<LambdaSlot> lambda_slots(const ModelSpec& spec) {
  static const char* suffix[3] = {"tt", "st", "ss"};
  std::vector<LambdaSlot> slots;
  for (std::size_t i = 0; i < spec.seasonals.size(); ++i)
    for (int c = 0; c < 3; ++c)
      slots.push_back({LambdaSlot::Target::seasonal, i, c, spec.seasonals[i].name + "." + suffix[c]});
  slots.push_back({LambdaSlot::Target::trend, 0, 0, "trend"});
  for (std::size_t j = 0; j < spec.covariates.size(); ++j)
    if (spec.covariates[j].kind == CovariateKind::flexible)
      slots.push_back({LambdaSlot::Target::flexible, j, 0, spec.covariates[j].name});
  for (std::size_t j = 0; j < spec.covariates.size(); ++j)
    if (spec.covariates[j].kind == CovariateKind::seasonal)
      for (int c = 0; c < 3; ++c)
        slots.push_back({LambdaSlot::Target::seasonal_covariate, j, c, spec.covariates[j].name + "." + suffix[c]});
  return slots;
}

inline double& lambda_ref(ModelSpec& spec, const LambdaSlot& slot) {
  auto pick = [&](Lambdas3& l) -> double& { return slot.component == 0 ? l.tt : slot.component == 1 ? l.st : l.ss; };
  switch (slot.target) {
    case LambdaSlot::Target::seasonal:
      return pick(spec.seasonals.at(slot.index).lambdas);
    case LambdaSlot::Target::trend:
      return spec.trend_lambda;
    case LambdaSlot::Target::flexible:
      return spec.covariates.at(slot.index).theta;
    case LambdaSlot::Target::seasonal_covariate:
      return pick(spec.covariates.at(slot.index).thetas);
  }
  throw ConfigError("unknown smoothing parameter slot");
}

inline double lambda_value(const ModelSpec& spec, const LambdaSlot& slot) {
  return lambda_ref(const_cast<ModelSpec&>(spec), slot);
}

/// Log smoothing parameters of the free slots, in slot order.
struct LambdaPoint {
  std::vector<std::string> names;
  std::vector<double> log_values;
};

struct CvConfig {
  CvMode mode = CvMode::loocv;
  std::size_t folds = 5;
  std::size_t gap = 1;
  NelderMeadOptions optimizer;
  /// Starting log-lambdas for the free slots; empty means all zero.
  std::vector<double> initial;
  /// Names of the slots to optimize; empty means every slot.
  std::vector<std::string> free;
  CvBackend backend = CvBackend::automatic;

  void validate() const {
    if (mode == CvMode::kfold) {
      if (folds < 2) throw ConfigError("k-fold cross-validation needs K >= 2");
      if (gap < 1) throw ConfigError("k-fold cross-validation needs a gap g >= 1");
    }
  }
};

namespace detail {

inline bool use_kernel(const ModelSpec& spec, CvBackend backend) {
  switch (backend) {
    case CvBackend::sparse:
      return false;
    case CvBackend::cycle_kernel:
      if (auto why = cycle_kernel_unsupported(spec)) throw ConfigError("covariance-form solver: " + *why);
      return true;
    case CvBackend::automatic:
      return !cycle_kernel_unsupported(spec).has_value();
  }
  return false;
}

inline double loocv_from(std::span<const double> resid, std::span<const double> leverage,
                         std::span<const std::size_t> times) {
  double cv = 0.0;
  for (std::size_t i = 0; i < resid.size(); ++i) {
    if (leverage[i] >= saturation_threshold) {
      throw SaturationError("leave-one-out residual undefined: saturated at observation t = " +
                            std::to_string(times[i] + 1) + " (leverage " + std::to_string(leverage[i]) +
                            "); increase the smoothing parameters");
    }
    const double e = resid[i] / (1.0 - leverage[i]);
    cv += e * e;
  }
  return cv;
}

/// Caches the lambda-independent trend kernel between evaluations.
struct KernelCache {
  std::size_t n = 0;
  Eigen::MatrixXd trend;
  const Eigen::MatrixXd* get(std::size_t size) {
    if (n != size) {
      trend = trend_kernel(size);
      n = size;
    }
    return &trend;
  }
};

inline double kernel_loocv(const ModelSpec& spec, const TimeSeriesData& data, KernelCache* cache) {
  data.validate();
  spec.validate(data.size());
  const KernelModel km(spec, data.size(), cache ? cache->get(data.size()) : nullptr);
  const auto obs = data.observed_indices();
  std::vector<double> y;
  for (std::size_t t : obs) y.push_back(*data.y[t]);
  const KernelSolve ks = kernel_solve(km.signal(), km.affine(), obs, y, true);
  double cv = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double mi = ks.m_diag(static_cast<Eigen::Index>(i));
    if (1.0 - mi >= saturation_threshold) {
      throw SaturationError("leave-one-out residual undefined: saturated at observation t = " + std::to_string(obs[i] + 1) +
                            "; increase the smoothing parameters");
    }
    const double e = ks.w(static_cast<Eigen::Index>(i)) / mi;
    cv += e * e;
  }
  return cv;
}

}  // namespace detail

/// Sum of squared leave-one-out residuals (y_i - yhat_i) / (1 - h_ii) over observed points.
inline double loocv_score(const ModelSpec& spec, const TimeSeriesData& data, CvBackend backend = CvBackend::automatic) {
  if (detail::use_kernel(spec, backend)) return detail::kernel_loocv(spec, data, nullptr);
  const DesignSystem ds = assemble(spec, data);
  const NormalEquations ne(ds.x);
  const auto eta = ne.least_squares(ds.y_plus).solution;
  const std::size_t m = ds.observation_rows();
  std::vector<std::size_t> rows(m);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto h = ne.leverages(rows);
  std::vector<double> resid(m);
  for (std::size_t r = 0; r < m; ++r) {
    double f = 0.0;
    const auto idx = ds.x.row_indices(r);
    const auto val = ds.x.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) f += val[k] * eta[idx[k]];
    resid[r] = ds.y_plus[r] - f;
  }
  return detail::loocv_from(resid, h, ds.observed_times);
}

/// Fold of each time index: ((t-1) mod (K g)) / g with 1-based t, folds 0..K-1.
inline std::vector<std::size_t> kfold_assign(std::size_t n, std::size_t k, std::size_t g) {
  if (k < 2) throw ConfigError("k-fold assignment needs K >= 2");
  if (g < 1) throw ConfigError("k-fold assignment needs g >= 1");
  std::vector<std::size_t> fold(n);
  for (std::size_t t = 0; t < n; ++t) fold[t] = (t % (k * g)) / g;
  return fold;
}

namespace detail {

[[noreturn]] inline void rethrow_with_fold(std::size_t fold) {
  const std::string prefix = "fit for fold " + std::to_string(fold) + " failed: ";
  try {
    throw;
  } catch (const SaturationError& e) {
    throw SaturationError(prefix + e.what());
  } catch (const RankDeficientError& e) {
    throw RankDeficientError(prefix + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const DataError& e) {
    throw DataError(prefix + e.what());
  }
}

inline double kernel_kfold(const ModelSpec& spec, const TimeSeriesData& data, std::size_t k, std::size_t g,
                           KernelCache* cache) {
  data.validate();
  spec.validate(data.size());
  const std::size_t n = data.size();
  const KernelModel km(spec, n, cache ? cache->get(n) : nullptr);
  const Eigen::MatrixXd signal = km.signal();
  const auto fold = kfold_assign(n, k, g);
  double score = 0.0;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> train, held;
    std::vector<double> y;
    for (std::size_t t = 0; t < n; ++t) {
      if (!data.observed(t)) continue;
      if (fold[t] == f) {
        held.push_back(t);
      } else {
        train.push_back(t);
        y.push_back(*data.y[t]);
      }
    }
    if (held.empty()) continue;
    try {
      const KernelSolve ks = kernel_solve(signal, km.affine(), train, y, false);
      for (std::size_t h : held) {
        const auto hi = static_cast<Eigen::Index>(h);
        double pred = km.affine().row(hi).dot(ks.a);
        for (std::size_t a = 0; a < train.size(); ++a)
          pred += signal(hi, static_cast<Eigen::Index>(train[a])) * ks.w(static_cast<Eigen::Index>(a));
        const double e = *data.y[h] - pred;
        score += e * e;
      }
    } catch (const Error&) {
      rethrow_with_fold(f);
    }
  }
  return score;
}

}  // namespace detail

/// Gapped K-fold score: each fold's observations are refitted as missing and
/// predicted; returns the summed squared prediction errors.
inline double kfold_score(const ModelSpec& spec, const TimeSeriesData& data, std::size_t k, std::size_t g,
                          CvBackend backend = CvBackend::automatic) {
  if (detail::use_kernel(spec, backend)) return detail::kernel_kfold(spec, data, k, g, nullptr);
  data.validate();
  const std::size_t n = data.size();
  const auto fold = kfold_assign(n, k, g);
  std::vector<std::size_t> index;
  std::vector<double> value;
  const auto blocks = column_blocks(spec, n);
  double score = 0.0;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> held;
    for (std::size_t t = 0; t < n; ++t)
      if (fold[t] == f && data.observed(t)) held.push_back(t);
    if (held.empty()) continue;
    try {
      const TimeSeriesData train = data.with_missing(held);
      const DesignSystem ds = assemble(spec, train);
      const auto eta = normal_equations_solve(ds.x, ds.y_plus).solution;
      for (std::size_t t : held) {
        index.clear();
        value.clear();
        detail::observation_row(spec, blocks, t, index, value);
        double pred = 0.0;
        for (std::size_t j = 0; j < index.size(); ++j) pred += value[j] * eta[index[j]];
        const double e = *data.y[t] - pred;
        score += e * e;
      }
    } catch (const Error&) {
      detail::rethrow_with_fold(f);
    }
  }
  return score;
}

struct CvResult {
  LambdaPoint best;
  double score = 0.0;
  /// Input spec with the optimized smoothing parameters filled in.
  ModelSpec spec;
  std::vector<Evaluation> trace;
  bool converged = false;
  bool used_kernel = false;
};

/// Nelder-Mead over log-lambda for the free slots, minimizing the configured CV score.
inline CvResult optimize_lambdas(const ModelSpec& spec, const TimeSeriesData& data, const CvConfig& cfg) {
  cfg.validate();
  data.validate();
  const auto all = lambda_slots(spec);
  std::vector<LambdaSlot> free;
  if (cfg.free.empty()) {
    free = all;
  } else {
    for (const auto& name : cfg.free) {
      auto it = std::find_if(all.begin(), all.end(), [&](const LambdaSlot& s) { return s.name == name; });
      if (it == all.end()) throw ConfigError("unknown smoothing parameter '" + name + "'");
      free.push_back(*it);
    }
  }
  if (free.empty()) throw ConfigError("no free smoothing parameters to optimize");
  std::vector<double> start = cfg.initial.empty() ? std::vector<double>(free.size(), 0.0) : cfg.initial;
  if (start.size() != free.size()) {
    throw ConfigError("initial point has " + std::to_string(start.size()) + " values for " +
                      std::to_string(free.size()) + " free smoothing parameters");
  }

  auto make_spec = [&](const std::vector<double>& x) {
    ModelSpec s = spec;
    for (std::size_t i = 0; i < free.size(); ++i) lambda_ref(s, free[i]) = std::exp(x[i]);
    return s;
  };

  // Kernel eligibility is decided on a representative point: positive values
  // in all free slots keep it fixed along the search.
  const bool kernel = detail::use_kernel(make_spec(start), cfg.backend);
  detail::KernelCache cache;
  auto objective = [&](const std::vector<double>& x) {
    for (double v : x)
      if (!std::isfinite(v) || std::abs(v) > 700.0) throw NumericalError("log-lambda out of range");
    const ModelSpec s = make_spec(x);
    if (kernel) {
      return cfg.mode == CvMode::loocv ? detail::kernel_loocv(s, data, &cache)
                                       : detail::kernel_kfold(s, data, cfg.folds, cfg.gap, &cache);
    }
    return cfg.mode == CvMode::loocv ? loocv_score(s, data, CvBackend::sparse)
                                     : kfold_score(s, data, cfg.folds, cfg.gap, CvBackend::sparse);
  };

  const NelderMeadResult nm = nelder_mead(objective, start, cfg.optimizer);
  CvResult out;
  for (const auto& s : free) out.best.names.push_back(s.name);
  out.best.log_values = nm.best_point;
  out.score = nm.best_value;
  out.spec = make_spec(nm.best_point);
  out.trace = nm.trace;
  out.converged = nm.converged;
  out.used_kernel = kernel;
  return out;
}

/// Trace as CSV: evaluation, one log-lambda column per free slot, score.
inline void write_trace_csv(std::ostream& os, const CvResult& result) {
  os << "evaluation";
  for (const auto& name : result.best.names) os << ",log_" << name;
  os << ",score\n";
  os << std::setprecision(17);
  for (const auto& e : result.trace) {
    os << e.index;
    for (double v : e.point) os << ',' << v;
    os << ',';
    if (e.failed) os << "inf";
    else os << e.value;
    os << '\n';
  }
}

}  // namespace str
