#pragma once

// Plain dense reference computations. Nothing here calls into Eigen or the
// library's solvers, so every comparison against them is an independent route.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

#include "str/sparse_matrix.hpp"

namespace oracle {

struct Dense {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Dense() = default;
  Dense(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

inline Dense from_sparse(const str::SparseMatrix& m) {
  Dense d(m.rows(), m.cols());
  for (const auto& e : m.triplets()) d(e.row, e.col) += e.value;
  return d;
}

inline Dense transpose(const Dense& m) {
  Dense t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

inline Dense multiply(const Dense& x, const Dense& y) {
  if (x.cols != y.rows) throw std::invalid_argument("oracle multiply: shape mismatch");
  Dense p(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t k = 0; k < x.cols; ++k) {
      const double v = x(i, k);
      if (v == 0.0) continue;
      for (std::size_t j = 0; j < y.cols; ++j) p(i, j) += v * y(k, j);
    }
  return p;
}

inline std::vector<double> multiply(const Dense& x, const std::vector<double>& v) {
  std::vector<double> out(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out[i] += x(i, j) * v[j];
  return out;
}

/// Inverse of a symmetric positive definite matrix by Gauss-Jordan with partial pivoting.
inline Dense inverse(Dense m) {
  const std::size_t n = m.rows;
  Dense inv(n, n);
  for (std::size_t i = 0; i < n; ++i) inv(i, i) = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(m(r, c)) > std::abs(m(piv, c))) piv = r;
    if (m(piv, c) == 0.0) throw std::runtime_error("oracle inverse: singular matrix");
    if (piv != c) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(m(c, j), m(piv, j));
        std::swap(inv(c, j), inv(piv, j));
      }
    }
    const double d = m(c, c);
    for (std::size_t j = 0; j < n; ++j) {
      m(c, j) /= d;
      inv(c, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = m(r, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        m(r, j) -= f * m(c, j);
        inv(r, j) -= f * inv(c, j);
      }
    }
  }
  return inv;
}

/// (X'WX)^{-1} X'W y with W given as a dense weight matrix, or identity when empty.
inline std::vector<double> weighted_least_squares(const Dense& x, const std::vector<double>& y, const Dense* w = nullptr) {
  const Dense xt = transpose(x);
  const Dense xtw = w ? multiply(xt, *w) : xt;
  const Dense g = inverse(multiply(xtw, x));
  return multiply(g, multiply(xtw, y));
}

inline std::vector<double> least_squares(const Dense& x, const std::vector<double>& y) {
  return weighted_least_squares(x, y);
}

/// diag(X (X'X)^{-1} X').
inline std::vector<double> hat_diagonal(const Dense& x) {
  const Dense g = inverse(multiply(transpose(x), x));
  std::vector<double> h(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j)
      for (std::size_t k = 0; k < x.cols; ++k) h[i] += x(i, j) * g(j, k) * x(i, k);
  return h;
}

/// Full m x n surface from reduced coordinates index(k, t) = t (m - 1) + k,
/// with the last node the negative sum of the others.
inline Dense surface_from_reduced(std::size_t m, std::size_t n, const std::vector<double>& s) {
  Dense full(m, n);
  for (std::size_t t = 0; t < n; ++t) {
    double sum = 0.0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      full(k, t) = s[t * (m - 1) + k];
      sum += full(k, t);
    }
    full(m - 1, t) = -sum;
  }
  return full;
}

/// Second time differences of every node, ordered by (t, k).
inline std::vector<double> cycle_tt(const Dense& s) {
  std::vector<double> out;
  for (std::size_t t = 2; t < s.cols; ++t)
    for (std::size_t k = 0; k < s.rows; ++k) out.push_back(s(k, t) - 2 * s(k, t - 1) + s(k, t - 2));
  return out;
}

/// Circular second season differences, ordered by (t, k).
inline std::vector<double> cycle_ss(const Dense& s) {
  const std::size_t m = s.rows;
  std::vector<double> out;
  for (std::size_t t = 0; t < s.cols; ++t)
    for (std::size_t k = 0; k < m; ++k) out.push_back(s((k + 1) % m, t) - 2 * s(k, t) + s((k + m - 1) % m, t));
  return out;
}

/// Time differences of the season difference across edge k -> k+1, ordered by
/// (t, edge) with edges sorted by (from, to).
inline std::vector<double> cycle_st(const Dense& s) {
  const std::size_t m = s.rows;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t k = 0; k < m; ++k) edges.emplace_back(k, (k + 1) % m);
  std::sort(edges.begin(), edges.end());
  std::vector<double> out;
  for (std::size_t t = 1; t < s.cols; ++t)
    for (const auto& [k, j] : edges) out.push_back((s(j, t) - s(k, t)) - (s(j, t - 1) - s(k, t - 1)));
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Leave-one-out score of simple linear regression on t = 0..n-1.
inline double line_loocv(const std::vector<double>& y) {
  const std::size_t n = y.size();
  double st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t t = 0; t < n; ++t) {
    st += t;
    sy += y[t];
    stt += double(t) * t;
    sty += t * y[t];
  }
  const double tbar = st / n;
  const double sxx = stt - n * tbar * tbar;
  const double b = (sty - n * tbar * (sy / n)) / sxx;
  const double a = sy / n - b * tbar;
  double cv = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const double h = 1.0 / n + (t - tbar) * (t - tbar) / sxx;
    const double e = (y[t] - a - b * t) / (1.0 - h);
    cv += e * e;
  }
  return cv;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<double> normals(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  return v;
}

/// Random sparse matrix with the given density and values in [-1, 1].
inline str::SparseMatrix random_sparse(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double density) {
  std::uniform_real_distribution<double> u(-1.0, 1.0), p(0.0, 1.0);
  std::vector<str::Triplet> t;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (p(rng) < density) t.push_back({i, j, u(rng)});
  return str::SparseMatrix(rows, cols, std::move(t));
}

}  // namespace oracle
