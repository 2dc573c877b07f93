#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "str/errors.hpp"

namespace str {

struct NelderMeadOptions {
  std::size_t max_evaluations = 200;
  /// Stop when max - min simplex value < tolerance * (1 + |best|).
  double tolerance = 1e-6;
  double initial_step = 1.0;
  double reflection = 1.0;
  double expansion = 2.0;
  double contraction = 0.5;
  double shrink = 0.5;
  /// Fresh simplices built around the best point after the first search ends.
  std::size_t restarts = 0;
};

struct Evaluation {
  std::size_t index = 0;
  std::vector<double> point;
  double value = 0.0;
  bool failed = false;
};

struct NelderMeadResult {
  std::vector<double> best_point;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<Evaluation> trace;
  bool converged = false;
};

/// Minimizes `f` from `start`. An evaluation that throws a NumericalError
/// scores +inf and is recorded as failed. Returns the best point visited.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    const std::vector<double>& start, const NelderMeadOptions& opt = {}) {
  const std::size_t d = start.size();
  if (d == 0) throw ConfigError("nelder_mead: nothing to optimize");
  if (opt.max_evaluations == 0) throw ConfigError("nelder_mead: max_evaluations must be positive");

  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    Evaluation e;
    e.index = res.trace.size();
    e.point = x;
    try {
      e.value = f(x);
      if (std::isnan(e.value)) throw NumericalError("objective returned NaN");
    } catch (const NumericalError&) {
      e.value = std::numeric_limits<double>::infinity();
      e.failed = true;
    }
    if (!e.failed && e.value < res.best_value) {
      res.best_value = e.value;
      res.best_point = x;
    }
    res.trace.push_back(e);
    return e.value;
  };
  auto budget_left = [&] { return res.trace.size() < opt.max_evaluations; };

  std::vector<std::vector<double>> simplex;
  std::vector<double> values;
  auto build_simplex = [&](const std::vector<double>& origin, double origin_value) {
    simplex.assign(1, origin);
    values.assign(1, origin_value);
    for (std::size_t i = 0; i < d && budget_left(); ++i) {
      auto x = origin;
      x[i] += opt.initial_step;
      simplex.push_back(x);
      values.push_back(eval(x));
    }
  };
  build_simplex(start, eval(start));

  auto combine = [d](const std::vector<double>& c, const std::vector<double>& x, double coef) {
    std::vector<double> out(d);
    for (std::size_t k = 0; k < d; ++k) out[k] = c[k] + coef * (x[k] - c[k]);
    return out;
  };

  std::vector<std::size_t> order(d + 1);
  std::size_t restarts_left = opt.restarts;
  while (simplex.size() == d + 1) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::vector<double>> s2;
    std::vector<double> v2;
    for (std::size_t i : order) {
      s2.push_back(simplex[i]);
      v2.push_back(values[i]);
    }
    simplex.swap(s2);
    values.swap(v2);

    const double best = values.front();
    const double worst = values.back();
    if (std::isfinite(worst) && worst - best < opt.tolerance * (1.0 + std::abs(best))) {
      res.converged = true;
      if (restarts_left == 0 || !budget_left() || res.best_point.empty()) break;
      --restarts_left;
      res.converged = false;
      build_simplex(res.best_point, res.best_value);
      continue;
    }
    if (!budget_left()) break;

    std::vector<double> centroid(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t k = 0; k < d; ++k) centroid[k] += simplex[i][k] / static_cast<double>(d);

    const auto xr = combine(centroid, simplex[d], -opt.reflection);
    const double fr = eval(xr);
    if (fr < values[0]) {
      if (!budget_left()) {
        simplex[d] = xr;
        values[d] = fr;
        continue;
      }
      const auto xe = combine(centroid, xr, opt.expansion);
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[d] = xe;
        values[d] = fe;
      } else {
        simplex[d] = xr;
        values[d] = fr;
      }
      continue;
    }
    if (fr < values[d - 1]) {
      simplex[d] = xr;
      values[d] = fr;
      continue;
    }
    if (!budget_left()) break;
    bool accepted = false;
    if (fr < values[d]) {
      const auto xc = combine(centroid, xr, opt.contraction);
      const double fc = eval(xc);
      if (fc <= fr) {
        simplex[d] = xc;
        values[d] = fc;
        accepted = true;
      }
    } else {
      const auto xc = combine(centroid, simplex[d], opt.contraction);
      const double fc = eval(xc);
      if (fc < values[d]) {
        simplex[d] = xc;
        values[d] = fc;
        accepted = true;
      }
    }
    if (accepted) continue;
    for (std::size_t i = 1; i <= d && budget_left(); ++i) {
      simplex[i] = combine(simplex[0], simplex[i], opt.shrink);
      values[i] = eval(simplex[i]);
    }
  }

  if (res.best_point.empty()) {
    throw NumericalError("all " + std::to_string(res.trace.size()) + " objective evaluations failed");
  }
  return res;
}

}  // namespace str
