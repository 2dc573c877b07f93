#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/OrderingMethods>
#include <Eigen/SparseCholesky>

#include "str/errors.hpp"
#include "str/sparse_matrix.hpp"

namespace str {

struct SolverOptions {
  /// A pivot of the LDL' factor below this fraction of max diag(X'X) means rank deficiency.
  double pivot_tolerance = 1e-12;
  /// Estimated factor storage above this switches to conjugate gradients.
  std::size_t factor_memory_cap_bytes = std::size_t{2} << 30;
  double cg_tolerance = 1e-14;
  /// Zero selects 10 * ncols.
  std::size_t cg_max_iterations = 0;
};

enum class SolveMethod { cholesky, conjugate_gradient };

struct SolveDiagnostics {
  SolveMethod method = SolveMethod::cholesky;
  std::size_t factor_nonzeros = 0;
  std::size_t iterations = 0;
  /// Smallest LDL' pivot over the largest diagonal of X'X.
  double min_pivot_ratio = 0.0;
};

struct LinearSolveReport {
  std::vector<double> solution;
  /// ||X eta - y_plus||_2
  double residual_norm = 0.0;
  /// ||X'(X eta - y_plus)||_inf
  double gradient_norm = 0.0;
  SolveDiagnostics diagnostics;
  bool condition_warning = false;
};

namespace detail {

/// Nonzeros of the Cholesky factor of a symmetric matrix stored in full, via
/// elimination-tree row subtrees. Runs in O(nnz(L)) time without storing L.
inline std::size_t cholesky_factor_nonzeros(const Eigen::SparseMatrix<double>& a) {
  const int n = static_cast<int>(a.cols());
  std::vector<int> parent(n, -1), ancestor(n, -1), flag(n, -1);
  for (int k = 0; k < n; ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it) {
      for (int i = static_cast<int>(it.row()); i != -1 && i < k;) {
        const int next = ancestor[i];
        ancestor[i] = k;
        if (next == -1) parent[i] = k;
        i = next;
      }
    }
  }
  std::size_t total = static_cast<std::size_t>(n);
  for (int k = 0; k < n; ++k) {
    flag[k] = k;
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it) {
      for (int j = static_cast<int>(it.row()); j < k && flag[j] != k; j = parent[j]) {
        flag[j] = k;
        ++total;
      }
    }
  }
  return total;
}

inline std::string rank_message(std::size_t column) {
  std::ostringstream msg;
  msg << "normal equations are rank deficient at column " << column
      << "; some smoothing parameter is zero or too small for the model to be identifiable";
  return msg.str();
}

}  // namespace detail

/// Factorization of X'X for a fixed design, reused across right-hand sides.
class NormalEquations {
 public:
  using SpMat = Eigen::SparseMatrix<double>;

  explicit NormalEquations(const SparseMatrix& x, SolverOptions options = {}) : x_(x), options_(options) {
    const SpMat xe = x.to_eigen();
    SpMat gram = SpMat(xe.transpose()) * xe;
    gram.makeCompressed();
    const Eigen::Index n = gram.cols();
    if (n == 0) throw DimensionError("normal equations: design has no columns");

    const Eigen::VectorXd diag = gram.diagonal();
    max_diagonal_ = diag.maxCoeff();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!(diag(j) > 0.0)) throw RankDeficientError(detail::rank_message(static_cast<std::size_t>(j)));
    }

    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> pinv;
    Eigen::AMDOrdering<int> amd;
    amd(gram, pinv);
    perm_ = pinv.inverse();
    perm_inv_ = pinv;
    SpMat permuted;
    permuted = gram.selfadjointView<Eigen::Lower>().twistedBy(perm_);

    diagnostics_.factor_nonzeros = detail::cholesky_factor_nonzeros(permuted);
    const std::size_t bytes = diagnostics_.factor_nonzeros * (sizeof(double) + sizeof(int));
    if (bytes <= options_.factor_memory_cap_bytes) {
      diagnostics_.method = SolveMethod::cholesky;
      ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>>>();
      ldlt_->compute(permuted);
      if (ldlt_->info() != Eigen::Success) {
        throw RankDeficientError("normal equations: zero pivot in LDL' factorization; "
                                 "some smoothing parameter is zero or too small for the model to be identifiable");
      }
      const Eigen::VectorXd d = ldlt_->vectorD();
      double min_ratio = std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < d.size(); ++k) {
        const double ratio = d(k) / max_diagonal_;
        if (ratio <= options_.pivot_tolerance) {
          throw RankDeficientError(detail::rank_message(static_cast<std::size_t>(perm_inv_.indices()(k))));
        }
        min_ratio = std::min(min_ratio, ratio);
      }
      diagnostics_.min_pivot_ratio = min_ratio;
    } else {
      diagnostics_.method = SolveMethod::conjugate_gradient;
      gram_ = std::move(gram);
      cg_ = std::make_unique<Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper>>();
      cg_->setTolerance(options_.cg_tolerance);
      cg_->setMaxIterations(static_cast<Eigen::Index>(
          options_.cg_max_iterations ? options_.cg_max_iterations : 10 * static_cast<std::size_t>(n)));
      cg_->compute(gram_);
      diagnostics_.min_pivot_ratio = diag.minCoeff() / max_diagonal_;
    }
  }

  NormalEquations(const NormalEquations&) = delete;
  NormalEquations& operator=(const NormalEquations&) = delete;
  NormalEquations(NormalEquations&&) noexcept = default;
  NormalEquations& operator=(NormalEquations&&) noexcept = default;

  const SparseMatrix& design() const { return x_; }
  const SolveDiagnostics& diagnostics() const { return diagnostics_; }
  std::size_t size() const { return x_.cols(); }

  /// Solves (X'X) z = rhs.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    if (static_cast<std::size_t>(rhs.size()) != x_.cols()) {
      detail::check_length("normal equations solve", x_.cols(), static_cast<std::size_t>(rhs.size()), x_.cols(),
                           x_.cols());
    }
    if (ldlt_) {
      Eigen::VectorXd b = perm_ * rhs;
      Eigen::VectorXd z = ldlt_->solve(b);
      return perm_inv_ * z;
    }
    Eigen::VectorXd z = cg_->solve(rhs);
    last_iterations_ = static_cast<std::size_t>(cg_->iterations());
    if (cg_->info() != Eigen::Success) {
      std::ostringstream msg;
      msg << "conjugate gradient did not converge after " << cg_->iterations()
          << " iterations (estimated error " << cg_->error() << "); the system may be rank deficient";
      throw ConvergenceError(msg.str());
    }
    return z;
  }

  /// Least-squares solution of X eta ~ y_plus with diagnostics.
  LinearSolveReport least_squares(std::span<const double> y_plus) const {
    const auto xty = matvec_transpose(x_, y_plus);
    const Eigen::VectorXd eta = solve(Eigen::Map<const Eigen::VectorXd>(xty.data(), static_cast<Eigen::Index>(xty.size())));
    LinearSolveReport report;
    report.solution.assign(eta.data(), eta.data() + eta.size());
    auto resid = matvec(x_, report.solution);
    double rss = 0.0;
    for (std::size_t i = 0; i < resid.size(); ++i) {
      resid[i] -= y_plus[i];
      rss += resid[i] * resid[i];
    }
    report.residual_norm = std::sqrt(rss);
    double g = 0.0;
    for (double v : matvec_transpose(x_, resid)) g = std::max(g, std::abs(v));
    report.gradient_norm = g;
    report.diagnostics = diagnostics_;
    if (!ldlt_) report.diagnostics.iterations = last_iterations_;
    report.condition_warning = diagnostics_.min_pivot_ratio < 1e-10;
    return report;
  }

  /// v'(X'X)^{-1} v for a sparse v given as (index, value) pairs.
  double quadratic_form(std::span<const std::size_t> index, std::span<const double> value) const {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(x_.cols()));
    for (std::size_t k = 0; k < index.size(); ++k) v(static_cast<Eigen::Index>(index[k])) += value[k];
    const Eigen::VectorXd z = solve(v);
    return v.dot(z);
  }

  /// x_r'(X'X)^{-1} x_r for row r of the design.
  double leverage(std::size_t row) const { return quadratic_form(x_.row_indices(row), x_.row_values(row)); }

  std::vector<double> leverages(std::span<const std::size_t> rows) const {
    std::vector<double> h;
    h.reserve(rows.size());
    for (std::size_t r : rows) {
      if (r >= x_.rows()) throw DimensionError("leverage row outside the design");
      h.push_back(leverage(r));
    }
    return h;
  }

 private:
  SparseMatrix x_;
  SolverOptions options_;
  SolveDiagnostics diagnostics_;
  double max_diagonal_ = 0.0;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_;
  Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm_inv_;
  std::unique_ptr<Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::NaturalOrdering<int>>> ldlt_;
  SpMat gram_;
  std::unique_ptr<Eigen::ConjugateGradient<SpMat, Eigen::Lower | Eigen::Upper>> cg_;
  mutable std::size_t last_iterations_ = 0;
};

/// eta minimizing ||X eta - y_plus||_2 through the normal equations.
inline LinearSolveReport normal_equations_solve(const SparseMatrix& x, std::span<const double> y_plus,
                                                const SolverOptions& options = {}) {
  detail::check_length("normal_equations_solve", x.rows(), y_plus.size(), x.rows(), x.cols());
  return NormalEquations(x, options).least_squares(y_plus);
}

/// Hat-matrix diagonal h_ii = x_i'(X'X)^{-1}x_i for the requested rows.
inline std::vector<double> columnwise_inverse_diagonal(const SparseMatrix& x, std::span<const std::size_t> rows,
                                                       const SolverOptions& options = {}) {
  return NormalEquations(x, options).leverages(rows);
}

}  // namespace str
