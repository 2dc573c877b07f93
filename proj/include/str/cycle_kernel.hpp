#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "str/errors.hpp"
#include "str/model.hpp"

namespace str {

// Dense covariance-form solver for models made of a trend and cyclic
// seasonal components.
//
// The penalized least-squares fit equals the posterior mean of a Gaussian
// model: unit-variance noise, a trend whose second differences have variance
// 1/lambda_l^2 with a flat prior on its affine part, and seasonal surfaces
// whose precision is the penalty Gram matrix on the sum-to-zero subspace. On
// a cycle the season direction diagonalizes under the discrete Fourier
// transform, so each frequency contributes a pentadiagonal precision in time
// and the n x n covariance of the observed diagonal is assembled from their
// inverses. Work per fit is O(m n^2 + n^3) with n x n memory, independent of
// the n (m - 1) surface coordinates.

namespace detail {

/// Symmetric pentadiagonal matrix by bands: a0 diagonal, a1(i) = A(i, i+1), a2(i) = A(i, i+2).
struct Pentadiagonal {
  Eigen::VectorXd a0, a1, a2;
};

/// Gram matrix of the (n-2) x n second-difference operator.
inline Pentadiagonal second_difference_gram(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  Pentadiagonal p{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)};
  const double s[3] = {1.0, -2.0, 1.0};
  for (Eigen::Index r = 0; r + 2 < m; ++r) {
    for (int a = 0; a < 3; ++a) {
      p.a0(r + a) += s[a] * s[a];
      if (a + 1 < 3) p.a1(r + a) += s[a] * s[a + 1];
      if (a + 2 < 3) p.a2(r + a) += s[a] * s[a + 2];
    }
  }
  return p;
}

/// Gram matrix of the (n-1) x n first-difference operator (tridiagonal).
inline Pentadiagonal first_difference_gram(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  Pentadiagonal p{Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)};
  for (Eigen::Index r = 0; r + 1 < m; ++r) {
    p.a0(r) += 1.0;
    p.a0(r + 1) += 1.0;
    p.a1(r) -= 1.0;
  }
  return p;
}

/// Accumulates target(j, i) += coef[(j - i) mod m] * Z(i, j) for j >= i, where
/// Z is the inverse of the SPD pentadiagonal `p`. Uses the LDL' factor and the
/// backward recurrence Z = D^{-1} L^{-1} + (I - L') Z, three rows at a time.
inline void accumulate_inverse(const Pentadiagonal& p, const std::vector<double>& coef, Eigen::MatrixXd& target) {
  const Eigen::Index n = p.a0.size();
  const auto period = static_cast<Eigen::Index>(coef.size());
  Eigen::VectorXd d(n), l1(n), l2(n);  // l1(i) = L(i, i-1), l2(i) = L(i, i-2)
  l1.setZero();
  l2.setZero();
  for (Eigen::Index i = 0; i < n; ++i) {
    double di = p.a0(i);
    if (i >= 2) {
      l2(i) = p.a2(i - 2) / d(i - 2);
      di -= l2(i) * l2(i) * d(i - 2);
    }
    if (i >= 1) {
      const double t = p.a1(i - 1) - (i >= 2 ? l2(i) * l1(i - 1) * d(i - 2) : 0.0);
      l1(i) = t / d(i - 1);
      di -= l1(i) * l1(i) * d(i - 1);
    }
    if (!(di > 0.0)) throw NumericalError("seasonal precision matrix is not positive definite");
    d(i) = di;
  }

  // coef repeated to length n so the lag lookup is a contiguous segment.
  Eigen::VectorXd lagged(n);
  for (Eigen::Index q = 0; q < n; ++q) lagged(q) = coef[static_cast<std::size_t>(q % period)];

  Eigen::VectorXd r0 = Eigen::VectorXd::Zero(n), r1 = Eigen::VectorXd::Zero(n), r2 = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    // r1 holds row i+1 and r2 row i+2 (entries j >= their row index).
    const double p1 = i + 1 < n ? l1(i + 1) : 0.0;
    const double p2 = i + 2 < n ? l2(i + 2) : 0.0;
    if (i + 1 < n) {
      const double z_i2_i1 = i + 2 < n ? r1(i + 2) : 0.0;  // Z(i+2, i+1) = Z(i+1, i+2)
      r0(i + 1) = -p1 * r1(i + 1) - p2 * z_i2_i1;
    }
    if (i + 2 < n) {
      const Eigen::Index len = n - i - 2;
      r0.segment(i + 2, len) = -p1 * r1.segment(i + 2, len) - p2 * r2.segment(i + 2, len);
    }
    r0(i) = 1.0 / d(i) - (i + 1 < n ? p1 * r0(i + 1) : 0.0) - (i + 2 < n ? p2 * r0(i + 2) : 0.0);

    const Eigen::Index len = n - i;
    target.col(i).segment(i, len) += lagged.head(len).cwiseProduct(r0.segment(i, len));
    std::swap(r2, r1);
    std::swap(r1, r0);
  }
}

inline void symmetrize_from_lower(Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < j; ++i) a(i, j) = a(j, i);
}

/// Affine basis [1, t/n] with orthonormal columns.
inline Eigen::MatrixXd affine_basis(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd b(m, 2);
  for (Eigen::Index t = 0; t < m; ++t) {
    b(t, 0) = 1.0;
    b(t, 1) = static_cast<double>(t) / static_cast<double>(n);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(b);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m, 2);
}

}  // namespace detail

/// Covariance of the trend's deviation from its affine part for lambda_l = 1:
/// the integrated random walk Cov(X_i, X_j) = sum_{k=2}^{min(i,j)} (i-k+1)(j-k+1),
/// projected off the affine functions.
inline Eigen::MatrixXd trend_kernel(std::size_t n) {
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index j = 2; j < m; ++j) {
    for (Eigen::Index i = j; i < m; ++i) {
      g(i, j) = g(i - 1, j - 1) + static_cast<double>((i - 1) * (j - 1));
    }
  }
  detail::symmetrize_from_lower(g);
  const Eigen::MatrixXd q = detail::affine_basis(n);
  const Eigen::MatrixXd gq = g * q;
  g -= q * gq.transpose();
  g -= gq * q.transpose();
  g += q * (q.transpose() * gq) * q.transpose();
  return g;
}

/// Covariance of S[kappa(t), t] over t for a cycle of `period` seasons with kappa(t) = (t + phase) mod period.
inline Eigen::MatrixXd seasonal_kernel(std::size_t period, std::size_t n, const Lambdas3& l) {
  if (period < 2) throw ConfigError("seasonal kernel needs a period of at least 2");
  if (!(l.ss > 0.0)) throw ConfigError("seasonal kernel needs lambda_ss > 0");
  const auto a2 = detail::second_difference_gram(n);
  const auto a1 = detail::first_difference_gram(n);
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
  const double tt2 = l.tt * l.tt, st2 = l.st * l.st, ss2 = l.ss * l.ss;
  const double pm = static_cast<double>(period);
  std::vector<double> coef(period);
  for (std::size_t f = 1; 2 * f <= period; ++f) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(f) / pm;
    const double mu = 2.0 - 2.0 * std::cos(angle);
    const bool nyquist = 2 * f == period;
    for (std::size_t d = 0; d < period; ++d) {
      coef[d] = nyquist ? ((d % 2 == 0) ? 1.0 : -1.0) / pm : (2.0 / pm) * std::cos(angle * static_cast<double>(d));
    }
    detail::Pentadiagonal p{tt2 * a2.a0 + st2 * mu * a1.a0 + Eigen::VectorXd::Constant(m, ss2 * mu * mu),
                            tt2 * a2.a1 + st2 * mu * a1.a1, tt2 * a2.a2};
    detail::accumulate_inverse(p, coef, k);
  }
  detail::symmetrize_from_lower(k);
  return k;
}

/// Reason the covariance-form solver cannot handle `spec`, or nullopt when it can.
inline std::optional<std::string> cycle_kernel_unsupported(const ModelSpec& spec) {
  if (!spec.covariates.empty()) return "model has covariates";
  if (!(spec.trend_lambda > 0.0)) return "trend lambda is zero";
  for (const auto& s : spec.seasonals) {
    if (s.topology.kind() != TopologyKind::cycle) return "seasonal '" + s.name + "' is not a cycle";
    if (!s.map.cycle_period() || *s.map.cycle_period() != s.topology.size()) {
      return "seasonal '" + s.name + "' does not use the cycle season map";
    }
    if (!(s.lambdas.ss > 0.0)) return "seasonal '" + s.name + "' has lambda_ss = 0";
  }
  return std::nullopt;
}

/// Kernels of every component for one set of smoothing parameters.
class KernelModel {
 public:
  /// `trend_base` may be passed to reuse trend_kernel(n) across calls.
  KernelModel(const ModelSpec& spec, std::size_t n, const Eigen::MatrixXd* trend_base = nullptr) : n_(n) {
    if (auto why = cycle_kernel_unsupported(spec)) throw ConfigError("covariance-form solver: " + *why);
    if (n < 3) throw DataError("series needs at least 3 time points");
    const double s = 1.0 / (spec.trend_lambda * spec.trend_lambda);
    trend_ = trend_base ? (*trend_base) * s : trend_kernel(n) * s;
    for (const auto& season : spec.seasonals) seasonal_.push_back(seasonal_kernel(season.topology.size(), n, season.lambdas));
    basis_ = detail::affine_basis(n);
  }

  std::size_t size() const { return n_; }
  const Eigen::MatrixXd& trend() const { return trend_; }
  const std::vector<Eigen::MatrixXd>& seasonal() const { return seasonal_; }
  const Eigen::MatrixXd& affine() const { return basis_; }

  /// Signal covariance trend + sum of seasonals (noise not included).
  Eigen::MatrixXd signal() const {
    Eigen::MatrixXd s = trend_;
    for (const auto& k : seasonal_) s += k;
    return s;
  }

 private:
  std::size_t n_;
  Eigen::MatrixXd trend_;
  std::vector<Eigen::MatrixXd> seasonal_;
  Eigen::MatrixXd basis_;
};

/// Solution over one training set O.
struct KernelSolve {
  std::vector<std::size_t> train;
  /// Sigma_OO^{-1}(y_O - N_O a): the remainder estimate at the training times.
  Eigen::VectorXd w;
  /// Affine coefficients on KernelModel::affine().
  Eigen::VectorXd a;
  /// Diagonal of the residual-maker matrix; leverage = 1 - m_diag.
  Eigen::VectorXd m_diag;
};

inline KernelSolve kernel_solve(const Eigen::MatrixXd& signal, const Eigen::MatrixXd& basis,
                                const std::vector<std::size_t>& train, std::span<const double> y_train,
                                bool want_diagonal) {
  const auto no = static_cast<Eigen::Index>(train.size());
  if (no < 3) throw DataError("need at least 3 observations");
  Eigen::MatrixXd sigma(no, no);
  Eigen::MatrixXd nb(no, 2);
  Eigen::VectorXd y(no);
  for (Eigen::Index a = 0; a < no; ++a) {
    const auto ta = static_cast<Eigen::Index>(train[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < no; ++b) sigma(a, b) = signal(ta, static_cast<Eigen::Index>(train[static_cast<std::size_t>(b)]));
    sigma(a, a) += 1.0;
    nb.row(a) = basis.row(ta);
    y(a) = y_train[static_cast<std::size_t>(a)];
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("observation covariance is not positive definite");
  const Eigen::VectorXd sy = llt.solve(y);
  const Eigen::MatrixXd sn = llt.solve(nb);
  const Eigen::Matrix2d g = nb.transpose() * sn;
  Eigen::LLT<Eigen::Matrix2d> gl(g);
  if (gl.info() != Eigen::Success) throw RankDeficientError("observed times do not identify the affine trend");

  KernelSolve out;
  out.train = train;
  out.a = gl.solve(nb.transpose() * sy);
  out.w = sy - sn * out.a;
  if (want_diagonal) {
    Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(no, no);
    llt.matrixL().solveInPlace(linv);
    out.m_diag = linv.colwise().squaredNorm().transpose();
    const Eigen::MatrixXd c = gl.solve(sn.transpose());  // 2 x no
    for (Eigen::Index i = 0; i < no; ++i) out.m_diag(i) -= sn.row(i).dot(c.col(i));
  }
  return out;
}

/// Fitted component series over all n times.
struct KernelFit {
  std::vector<double> trend;
  std::vector<std::vector<double>> seasonal;
  std::vector<double> fitted;
  /// y - fitted at observed times, NaN elsewhere.
  std::vector<double> remainder;
  /// Leverages at the observed times.
  std::vector<double> leverages;
  std::vector<std::size_t> observed_times;
};

inline KernelFit kernel_fit(const ModelSpec& spec, const TimeSeriesData& data, const Eigen::MatrixXd* trend_base = nullptr,
                            bool want_leverages = true) {
  data.validate();
  spec.validate(data.size());
  const std::size_t n = data.size();
  const KernelModel km(spec, n, trend_base);
  const auto obs = data.observed_indices();
  std::vector<double> y;
  for (std::size_t t : obs) y.push_back(*data.y[t]);
  const KernelSolve ks = kernel_solve(km.signal(), km.affine(), obs, y, want_leverages);

  const auto m = static_cast<Eigen::Index>(n);
  auto apply = [&](const Eigen::MatrixXd& k) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m);
    for (std::size_t a = 0; a < obs.size(); ++a) v += k.col(static_cast<Eigen::Index>(obs[a])) * ks.w(static_cast<Eigen::Index>(a));
    return v;
  };
  KernelFit fit;
  fit.observed_times = obs;
  const Eigen::VectorXd trend = km.affine() * ks.a + apply(km.trend());
  fit.trend.assign(trend.data(), trend.data() + m);
  fit.fitted = fit.trend;
  for (const auto& k : km.seasonal()) {
    const Eigen::VectorXd s = apply(k);
    fit.seasonal.emplace_back(s.data(), s.data() + m);
    for (std::size_t t = 0; t < n; ++t) fit.fitted[t] += s(static_cast<Eigen::Index>(t));
  }
  fit.remainder.assign(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t t : obs) fit.remainder[t] = *data.y[t] - fit.fitted[t];
  if (want_leverages) {
    for (Eigen::Index i = 0; i < ks.m_diag.size(); ++i) fit.leverages.push_back(1.0 - ks.m_diag(i));
  }
  return fit;
}

}  // namespace str
