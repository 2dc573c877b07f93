#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <Eigen/Dense>

#include "str/errors.hpp"
#include "str/linear_solver.hpp"
#include "str/model.hpp"
#include "str/sparse_matrix.hpp"

namespace str {

enum class FitKind { ols, robust, gls };

struct FitOptions {
  SolverOptions solver;
  /// Diagonal of Cov(eta); costs one solve per coefficient.
  bool coefficient_variances = true;
  /// Per-time variances of the trend, seasonal diagonals and fitted values.
  bool component_variances = true;
};

struct FitResult {
  FitKind kind = FitKind::ols;
  std::vector<double> eta;
  Components components;
  double sigma_r = 0.0;
  /// False for robust fits, which report no covariance.
  bool has_covariance = false;
  std::vector<double> coefficient_variances;
  std::vector<double> trend_variance;
  std::vector<std::vector<double>> seasonal_variance;
  /// Variance of the summed components at each time.
  std::vector<double> fitted_variance;
  /// h_ii for each observation row (L2 fits).
  std::vector<double> leverages;
  std::vector<std::size_t> observed_times;
  /// Trace of the observation block of the hat matrix.
  double effective_dof = 0.0;
  /// Loss at the solution: RSS over all rows for L2 fits, L1 norm for robust fits.
  double objective = 0.0;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<double> observation_fitted(const DesignSystem& ds, std::span<const double> eta) {
  std::vector<double> fitted(ds.observation_rows());
  for (std::size_t r = 0; r < fitted.size(); ++r) {
    const auto idx = ds.x.row_indices(r);
    const auto val = ds.x.row_values(r);
    double s = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) s += val[k] * eta[idx[k]];
    fitted[r] = s;
  }
  return fitted;
}

/// Fills the variance fields of `fit` from a factorization whose inverse, times `scale`, is Cov(eta).
inline void fill_variances(FitResult& fit, const ModelSpec& spec, const DesignSystem& ds, const NormalEquations& ne,
                           double scale, const FitOptions& options) {
  const std::size_t n = ds.n;
  const std::size_t ncols = ds.x.cols();
  const ColumnBlock* trend_block = nullptr;
  for (const auto& b : ds.columns)
    if (b.kind == BlockKind::trend) trend_block = &b;

  std::vector<std::size_t> one_index(1);
  std::vector<double> one_value{1.0};
  auto unit_variance = [&](std::size_t column) {
    one_index[0] = column;
    return scale * ne.quadratic_form(one_index, one_value);
  };

  if (options.coefficient_variances) {
    fit.coefficient_variances.resize(ncols);
    for (std::size_t j = 0; j < ncols; ++j) fit.coefficient_variances[j] = unit_variance(j);
  }
  if (!options.component_variances) return;

  fit.trend_variance.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t col = trend_block->offset + t;
    fit.trend_variance[t] = options.coefficient_variances ? fit.coefficient_variances[col] : unit_variance(col);
  }

  std::vector<std::size_t> index;
  std::vector<double> value;
  fit.seasonal_variance.assign(spec.seasonals.size(), std::vector<double>(n, 0.0));
  for (const auto& b : ds.columns) {
    if (b.kind != BlockKind::seasonal) continue;
    const auto& season = spec.seasonals[b.source];
    const SurfaceLayout& layout = *b.layout;
    for (std::size_t t = 0; t < n; ++t) {
      index.clear();
      value.clear();
      const NodeId node = season.map[t];
      if (auto c = layout.coordinate(node, t)) {
        index.push_back(b.offset + *c);
        value.push_back(1.0);
      } else {
        for (NodeId k = 0; k + 1 < layout.nodes; ++k) {
          index.push_back(b.offset + *layout.coordinate(k, t));
          value.push_back(-1.0);
        }
      }
      fit.seasonal_variance[b.source][t] = scale * ne.quadratic_form(index, value);
    }
  }

  fit.fitted_variance.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    index.clear();
    value.clear();
    detail::observation_row(spec, ds.columns, t, index, value);
    fit.fitted_variance[t] = scale * ne.quadratic_form(index, value);
  }
}

/// Least-squares core shared by the OLS and GLS fits. `weighted` is the
/// (possibly whitened) system; `ds` keeps the original observation rows.
inline FitResult least_squares_fit(FitKind kind, const ModelSpec& spec, const TimeSeriesData& data,
                                   const DesignSystem& ds, const SparseMatrix& weighted_x,
                                   std::span<const double> weighted_y, const FitOptions& options) {
  const NormalEquations ne(weighted_x, options.solver);
  const LinearSolveReport report = ne.least_squares(weighted_y);

  FitResult fit;
  fit.kind = kind;
  fit.eta = report.solution;
  fit.observed_times = ds.observed_times;
  fit.objective = report.residual_norm * report.residual_norm;
  fit.components = split_components(spec, fit.eta, data);
  for (const auto& name : ds.dropped) fit.warnings.push_back("penalty block '" + name + "' has zero weight and was removed");
  if (report.condition_warning) fit.warnings.push_back("normal equations are poorly conditioned");

  std::vector<std::size_t> rows(ds.observation_rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  fit.leverages = ne.leverages(rows);
  fit.effective_dof = std::accumulate(fit.leverages.begin(), fit.leverages.end(), 0.0);

  const auto fitted = observation_fitted(ds, fit.eta);
  double rss = 0.0;
  for (std::size_t r = 0; r < fitted.size(); ++r) rss += (ds.y_plus[r] - fitted[r]) * (ds.y_plus[r] - fitted[r]);
  const double residual_dof = static_cast<double>(ds.observation_rows()) - fit.effective_dof;

  double scale = 1.0;
  if (kind == FitKind::ols) {
    if (!(residual_dof > 1e-9)) {
      throw NumericalError("no residual degrees of freedom left (n_obs = " + std::to_string(ds.observation_rows()) +
                           ", trace of hat matrix = " + std::to_string(fit.effective_dof) +
                           "); increase the smoothing parameters");
    }
    fit.sigma_r = std::sqrt(rss / residual_dof);
    scale = fit.sigma_r * fit.sigma_r;
  }
  fit.has_covariance = true;
  fill_variances(fit, spec, ds, ne, scale, options);
  return fit;
}

}  // namespace detail

/// Penalized least-squares fit: eta = (X'X)^{-1} X' y_plus, Cov(eta) = sigma^2 (X'X)^{-1}
/// with sigma^2 = RSS_obs / (n_obs - tr H_obs).
inline FitResult fit_ols(const ModelSpec& spec, const TimeSeriesData& data, const FitOptions& options = {}) {
  const DesignSystem ds = assemble(spec, data);
  return detail::least_squares_fit(FitKind::ols, spec, data, ds, ds.x, ds.y_plus, options);
}

/// Covariance of the remainder over the observed times.
class NoiseCovariance {
 public:
  static NoiseCovariance scaled_identity(double variance) {
    NoiseCovariance c;
    c.kind_ = Kind::scaled_identity;
    c.variance_ = variance;
    return c;
  }
  static NoiseCovariance diagonal(std::vector<double> variances) {
    NoiseCovariance c;
    c.kind_ = Kind::diagonal;
    c.diagonal_ = std::move(variances);
    return c;
  }
  /// Stationary AR(1): Cov(R_s, R_t) = variance * rho^|s-t|.
  static NoiseCovariance ar1(double rho, double variance = 1.0) {
    NoiseCovariance c;
    c.kind_ = Kind::ar1;
    c.rho_ = rho;
    c.variance_ = variance;
    return c;
  }
  /// Full matrix indexed by time (n x n).
  static NoiseCovariance dense(Eigen::MatrixXd matrix) {
    NoiseCovariance c;
    c.kind_ = Kind::dense;
    c.dense_ = std::move(matrix);
    return c;
  }

  bool is_diagonal() const { return kind_ == Kind::scaled_identity || kind_ == Kind::diagonal; }

  Eigen::MatrixXd over(std::span<const std::size_t> times) const {
    const auto m = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) s(i, j) = entry(times[static_cast<std::size_t>(i)], times[static_cast<std::size_t>(j)]);
    }
    return s;
  }

  double entry(std::size_t s, std::size_t t) const {
    switch (kind_) {
      case Kind::scaled_identity:
        return s == t ? variance_ : 0.0;
      case Kind::diagonal:
        return s == t ? diagonal_.at(s) : 0.0;
      case Kind::ar1:
        return variance_ * std::pow(rho_, std::abs(static_cast<double>(s) - static_cast<double>(t)));
      case Kind::dense:
        return dense_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t));
    }
    return 0.0;
  }

 private:
  enum class Kind { scaled_identity, diagonal, ar1, dense };
  Kind kind_ = Kind::scaled_identity;
  double variance_ = 1.0;
  double rho_ = 0.0;
  std::vector<double> diagonal_;
  Eigen::MatrixXd dense_;
};

/// Generalized least squares with correlated remainders.
///
/// Observation rows are whitened by the inverse Cholesky factor of the noise
/// covariance. Penalty rows are given covariance s * I, where s is the mean
/// noise variance, so lambdas stay ratios to the noise scale and a scalar
/// covariance c * I leaves eta unchanged. Cov(eta) = (X' Sigma^{-1} X)^{-1}.
inline FitResult fit_gls(const ModelSpec& spec, const TimeSeriesData& data, const NoiseCovariance& sigma,
                         const FitOptions& options = {}) {
  const DesignSystem ds = assemble(spec, data);
  const std::size_t n_obs = ds.observation_rows();
  const Eigen::MatrixXd cov = sigma.over(ds.observed_times);
  if (!cov.isApprox(cov.transpose(), 1e-12)) throw NumericalError("noise covariance is not symmetric");
  const double mean_variance = cov.diagonal().mean();
  if (!(mean_variance > 0.0)) throw NumericalError("noise covariance is not positive definite");

  BlockBuilder builder(ds.x.rows(), ds.x.cols());
  std::vector<double> y(ds.y_plus.size());
  if (sigma.is_diagonal()) {
    for (std::size_t r = 0; r < n_obs; ++r) {
      const double d = cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r));
      if (!(d > 0.0)) throw NumericalError("noise covariance is not positive definite");
      const double w = 1.0 / std::sqrt(d);
      const auto idx = ds.x.row_indices(r);
      const auto val = ds.x.row_values(r);
      for (std::size_t k = 0; k < idx.size(); ++k) builder.add(r, idx[k], w * val[k]);
      y[r] = w * ds.y_plus[r];
    }
  } else {
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("noise covariance is not positive definite");
    const Eigen::MatrixXd whiten =
        llt.matrixL().solve(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n_obs), static_cast<Eigen::Index>(n_obs)));
    std::vector<double> row(ds.x.cols());
    std::vector<char> touched(ds.x.cols());
    for (std::size_t r = 0; r < n_obs; ++r) {
      std::fill(row.begin(), row.end(), 0.0);
      std::fill(touched.begin(), touched.end(), 0);
      double yr = 0.0;
      for (std::size_t j = 0; j <= r; ++j) {
        const double w = whiten(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        if (w == 0.0) continue;
        const auto idx = ds.x.row_indices(j);
        const auto val = ds.x.row_values(j);
        for (std::size_t k = 0; k < idx.size(); ++k) {
          row[idx[k]] += w * val[k];
          touched[idx[k]] = 1;
        }
        yr += w * ds.y_plus[j];
      }
      for (std::size_t c = 0; c < row.size(); ++c)
        if (touched[c]) builder.add(r, c, row[c]);
      y[r] = yr;
    }
  }
  const double penalty_scale = 1.0 / std::sqrt(mean_variance);
  for (std::size_t r = n_obs; r < ds.x.rows(); ++r) {
    const auto idx = ds.x.row_indices(r);
    const auto val = ds.x.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) builder.add(r, idx[k], penalty_scale * val[k]);
  }
  const SparseMatrix whitened = std::move(builder).build();

  FitResult fit = detail::least_squares_fit(FitKind::gls, spec, data, ds, whitened, y, options);
  fit.sigma_r = std::sqrt(mean_variance);
  return fit;
}

struct RobustOptions {
  FitOptions fit;
  std::size_t max_iterations = 200;
  /// Stop when the duality gap falls below this fraction of the objective.
  double relative_tolerance = 1e-10;
};

/// Result of an L1 regression on a stacked system.
struct L1Solution {
  std::vector<double> eta;
  double objective = 0.0;
  std::size_t iterations = 0;
  /// True when the returned point is a vertex with a verified optimality certificate.
  bool certified = false;
};

namespace detail {

inline double l1_norm(const SparseMatrix& x, std::span<const double> y, std::span<const double> eta) {
  const auto f = matvec(x, eta);
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) s += std::abs(y[i] - f[i]);
  return s;
}

/// Interpolates the `cols` rows with the smallest residuals at `eta`. The
/// vertex is optimal when some u in [-1, 1]^cols satisfies
/// X_B' u = -X_N' sign(r_N); zero residuals off the basis take sign 0.
inline std::optional<L1Solution> l1_vertex(const SparseMatrix& x, std::span<const double> y,
                                           std::span<const double> eta, double zero, const SolverOptions& solver) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  const auto fitted = matvec(x, eta);
  std::vector<std::size_t> order(rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(y[a] - fitted[a]) < std::abs(y[b] - fitted[b]);
  });
  order.resize(cols);
  std::sort(order.begin(), order.end());
  const SparseMatrix xb = x.select_rows(order);
  std::vector<double> yb(cols);
  for (std::size_t i = 0; i < cols; ++i) yb[i] = y[order[i]];

  L1Solution out;
  try {
    out.eta = normal_equations_solve(xb, yb, solver).solution;
  } catch (const NumericalError&) {
    return std::nullopt;
  }
  out.objective = l1_norm(x, y, out.eta);

  const auto f = matvec(x, out.eta);
  std::vector<char> in_basis(rows, 0);
  for (std::size_t r : order) in_basis[r] = 1;
  std::vector<double> rhs(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    if (in_basis[r]) continue;
    const double res = y[r] - f[r];
    if (std::abs(res) <= zero) continue;
    const double sgn = res > 0 ? 1.0 : -1.0;
    const auto idx = x.row_indices(r);
    const auto val = x.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) rhs[idx[k]] -= sgn * val[k];
  }
  try {
    const auto u = normal_equations_solve(xb.transpose(), rhs, solver).solution;
    out.certified = std::all_of(u.begin(), u.end(), [](double v) { return std::abs(v) <= 1.0 + 1e-9; });
  } catch (const NumericalError&) {
    out.certified = false;
  }
  return out;
}

/// Largest step in (0, inf) keeping v + step * dv nonnegative.
inline double step_to_boundary(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double step = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) step = std::min(step, -v(i) / dv(i));
  return step;
}

}  // namespace detail

/// Minimizes ||y - X eta||_1 by a primal-dual interior point method on the
/// dual problem max y'a subject to X'a = X'1 / 2, 0 <= a <= 1, with Mehrotra
/// predictor-corrector steps. Each step solves weighted normal equations
/// X' D X. The interior solution is then snapped to the vertex through its
/// smallest residuals when that is no worse.
inline L1Solution l1_regression(const SparseMatrix& x, std::span<const double> y, const RobustOptions& options = {}) {
  using Vec = Eigen::VectorXd;
  constexpr double damping = 0.99995;
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  detail::check_length("l1_regression", rows, y.size(), rows, cols);
  const auto n = static_cast<Eigen::Index>(rows);

  auto xt = [&](const Vec& v) {
    const auto r = matvec_transpose(x, std::span<const double>(v.data(), rows));
    return Vec(Eigen::Map<const Vec>(r.data(), static_cast<Eigen::Index>(cols)));
  };
  auto xv = [&](const Vec& v) {
    const auto r = matvec(x, std::span<const double>(v.data(), cols));
    return Vec(Eigen::Map<const Vec>(r.data(), n));
  };

  // Inner solves see weights spanning many decades near the optimum; only
  // nonpositive pivots are treated as failure there.
  SolverOptions inner = options.fit.solver;
  inner.pivot_tolerance = 0.0;

  const Vec c = -Eigen::Map<const Vec>(y.data(), n);
  const Vec b = 0.5 * xt(Vec::Ones(n));
  Vec a = Vec::Constant(n, 0.5);
  Vec s = Vec::Ones(n) - a;
  Vec v = NormalEquations(x, options.fit.solver).solve(xt(c));
  Vec r = c - xv(v);
  const double small = 1e-6 * std::max(1.0, r.cwiseAbs().maxCoeff());
  Vec z = r.cwiseMax(0.0);
  Vec w = (-r).cwiseMax(0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(r(i)) < small) {
      z(i) += small;
      w(i) += small;
    }
  }

  double gap = z.dot(a) + w.dot(s);
  std::size_t iter = 0;
  bool converged = false;
  while (iter < options.max_iterations) {
    // Objective of the current coefficients, -v.
    const Vec eta = -v;
    const double obj = detail::l1_norm(x, y, std::vector<double>(eta.data(), eta.data() + cols));
    if (gap <= options.relative_tolerance * std::max(obj, 1e-300) || gap <= 1e-300) {
      converged = true;
      break;
    }
    ++iter;
    const Vec d = (z.cwiseQuotient(a) + w.cwiseQuotient(s)).cwiseInverse();
    const Vec zw = z - w;
    const Vec rhs = b - xt(a) + xt(d.cwiseProduct(zw));
    // A ridge far below the largest diagonal keeps the factorization positive
    // when rows at their bounds have driven most weights to zero.
    BlockBuilder builder(rows + cols, cols);
    std::vector<double> diag(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      const double di = d(static_cast<Eigen::Index>(i));
      const double sw = std::sqrt(di);
      const auto idx = x.row_indices(i);
      const auto val = x.row_values(i);
      for (std::size_t k = 0; k < idx.size(); ++k) {
        builder.add(i, idx[k], sw * val[k]);
        diag[idx[k]] += di * val[k] * val[k];
      }
    }
    const double ridge = std::sqrt(1e-12 * *std::max_element(diag.begin(), diag.end()));
    for (std::size_t j = 0; j < cols; ++j) builder.add(rows + j, j, ridge);
    const NormalEquations ne(std::move(builder).build(), inner);

    Vec dv = ne.solve(rhs);
    Vec da = d.cwiseProduct(xv(dv) - zw);
    Vec ds = -da;
    Vec dz = -z.cwiseProduct(da.cwiseQuotient(a) + Vec::Ones(n));
    Vec dw = -w.cwiseProduct(ds.cwiseQuotient(s) + Vec::Ones(n));
    double primal = std::min(damping * std::min(detail::step_to_boundary(a, da), detail::step_to_boundary(s, ds)), 1.0);
    double dual = std::min(damping * std::min(detail::step_to_boundary(z, dz), detail::step_to_boundary(w, dw)), 1.0);

    if (std::min(primal, dual) < 1.0) {
      double mu = a.dot(z) + s.dot(w);
      const double g = (a + primal * da).dot(z + dual * dz) + (s + primal * ds).dot(w + dual * dw);
      mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
      const Vec dadz = da.cwiseProduct(dz);
      const Vec dsdw = ds.cwiseProduct(dw);
      const Vec dr = d.cwiseProduct(mu * (s.cwiseInverse() - a.cwiseInverse()) + dadz.cwiseQuotient(a) - dsdw.cwiseQuotient(s));
      dv = ne.solve(rhs + xt(dr));
      const Vec u = xv(dv);
      da = d.cwiseProduct(u - zw) - dr;
      ds = -da;
      dz = (mu * a.cwiseInverse() - z - z.cwiseProduct(da).cwiseQuotient(a) - dadz.cwiseQuotient(a)).eval();
      dw = (mu * s.cwiseInverse() - w - w.cwiseProduct(ds).cwiseQuotient(s) - dsdw.cwiseQuotient(s)).eval();
      primal = std::min(damping * std::min(detail::step_to_boundary(a, da), detail::step_to_boundary(s, ds)), 1.0);
      dual = std::min(damping * std::min(detail::step_to_boundary(z, dz), detail::step_to_boundary(w, dw)), 1.0);
    }
    a += primal * da;
    s += primal * ds;
    v += dual * dv;
    z += dual * dz;
    w += dual * dw;
    gap = z.dot(a) + w.dot(s);
  }

  L1Solution best;
  const Vec eta = -v;
  best.eta.assign(eta.data(), eta.data() + cols);
  best.objective = detail::l1_norm(x, y, best.eta);
  best.iterations = iter;
  if (!converged) {
    throw ConvergenceError("robust fit did not converge in " + std::to_string(options.max_iterations) +
                           " iterations; final L1 objective " + std::to_string(best.objective) + ", duality gap " +
                           std::to_string(gap));
  }
  const double zero = 1e-9 * std::max(1.0, best.objective / static_cast<double>(rows));
  if (auto vert = detail::l1_vertex(x, y, best.eta, zero, options.fit.solver)) {
    if (vert->objective <= best.objective * (1.0 + 1e-12)) {
      vert->iterations = iter;
      return *vert;
    }
  }
  return best;
}

/// Least absolute deviations over all rows of the stacked system.
inline FitResult fit_robust(const ModelSpec& spec, const TimeSeriesData& data, const RobustOptions& options = {}) {
  const DesignSystem ds = assemble(spec, data);
  L1Solution sol = l1_regression(ds.x, ds.y_plus, options);

  FitResult fit;
  fit.kind = FitKind::robust;
  fit.eta = std::move(sol.eta);
  fit.observed_times = ds.observed_times;
  fit.objective = sol.objective;
  fit.iterations = sol.iterations;
  fit.components = split_components(spec, fit.eta, data);
  for (const auto& name : ds.dropped) fit.warnings.push_back("penalty block '" + name + "' has zero weight and was removed");
  std::vector<double> abs_resid;
  for (std::size_t t : ds.observed_times) abs_resid.push_back(std::abs(fit.components.remainder[t]));
  std::nth_element(abs_resid.begin(), abs_resid.begin() + static_cast<std::ptrdiff_t>(abs_resid.size() / 2), abs_resid.end());
  fit.sigma_r = 1.4826 * abs_resid[abs_resid.size() / 2];
  fit.has_covariance = false;
  return fit;
}

struct Interval {
  std::vector<double> lower;
  std::vector<double> upper;
};

struct ComponentIntervals {
  double level = 0.95;
  Interval trend;
  std::vector<Interval> seasonal;
};

/// Two-sided normal quantile z_{(1+level)/2}.
inline double normal_half_width_factor(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
}

inline ComponentIntervals confidence_intervals(const FitResult& fit, double level) {
  const double z = normal_half_width_factor(level);
  if (fit.kind == FitKind::robust || !fit.has_covariance) {
    throw ConfigError("confidence intervals need a fit with a covariance (ols or gls)");
  }
  if (fit.trend_variance.empty()) throw ConfigError("fit was computed without component variances");
  auto band = [z](const std::vector<double>& value, const std::vector<double>& variance) {
    Interval iv;
    iv.lower.resize(value.size());
    iv.upper.resize(value.size());
    for (std::size_t t = 0; t < value.size(); ++t) {
      const double half = z * std::sqrt(std::max(variance[t], 0.0));
      iv.lower[t] = value[t] - half;
      iv.upper[t] = value[t] + half;
    }
    return iv;
  };
  ComponentIntervals out;
  out.level = level;
  out.trend = band(fit.components.trend, fit.trend_variance);
  for (std::size_t i = 0; i < fit.components.seasonal.size(); ++i)
    out.seasonal.push_back(band(fit.components.seasonal[i], fit.seasonal_variance[i]));
  return out;
}

struct ForecastResult {
  FitResult fit;
  std::size_t horizon = 0;
  /// Index of the first future time in the extended series.
  std::size_t first_future = 0;
  double level = 0.95;
  std::vector<double> mean;
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Treats `horizon` future times as missing, fits, and reads the fitted values
/// there. Prediction variance is the fitted-value variance plus sigma_R^2.
inline ForecastResult forecast(const ModelSpec& spec, const TimeSeriesData& data, std::size_t horizon,
                               double level = 0.95, const FitOptions& options = {}) {
  if (horizon == 0) throw ConfigError("forecast horizon must be at least 1");
  const std::size_t n = data.size();
  const std::size_t total = n + horizon;
  ModelSpec extended = spec;
  for (auto& s : extended.seasonals) s.map = s.map.extended(total);
  for (const auto& c : extended.covariates) {
    if (c.values.size() < total) {
      throw DataError("covariate '" + c.name + "' needs values for the forecast horizon (" + std::to_string(total) +
                      " in total, has " + std::to_string(c.values.size()) + ")");
    }
  }
  FitOptions opts = options;
  opts.component_variances = true;
  ForecastResult out;
  out.fit = fit_ols(extended, data.extended(horizon), opts);
  out.horizon = horizon;
  out.first_future = n;
  out.level = level;
  const double z = normal_half_width_factor(level);
  const double s2 = out.fit.sigma_r * out.fit.sigma_r;
  for (std::size_t t = n; t < total; ++t) {
    const double mean = out.fit.components.fitted[t];
    const double half = z * std::sqrt(std::max(out.fit.fitted_variance[t], 0.0) + s2);
    out.mean.push_back(mean);
    out.lower.push_back(mean - half);
    out.upper.push_back(mean + half);
  }
  return out;
}

}  // namespace str
