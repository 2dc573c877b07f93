#pragma once

#include <algorithm>
#include <cstddef>
#include <iomanip>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "str/errors.hpp"

namespace str {

struct Triplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

/// Real sparse matrix in compressed row form.
///
/// Entries are kept in (row, column) lexicographic order and duplicates given
/// on construction are summed, so every product below accumulates in the same
/// order on every call. Explicit zeros are stored as given.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  SparseMatrix(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) : rows_(rows), cols_(cols) {
    for (const auto& e : entries) {
      if (e.row >= rows || e.col >= cols) {
        std::ostringstream msg;
        msg << "entry (" << e.row << ", " << e.col << ") outside a " << rows << "x" << cols << " matrix";
        throw DimensionError(msg.str());
      }
    }
    std::stable_sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    row_ptr_.assign(rows + 1, 0);
    col_idx_.reserve(entries.size());
    values_.reserve(entries.size());
    for (std::size_t k = 0; k < entries.size();) {
      const std::size_t r = entries[k].row;
      const std::size_t c = entries[k].col;
      double sum = 0.0;
      for (; k < entries.size() && entries[k].row == r && entries[k].col == c; ++k) sum += entries[k].value;
      col_idx_.push_back(c);
      values_.push_back(sum);
      ++row_ptr_[r + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) row_ptr_[r + 1] += row_ptr_[r];
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return SparseMatrix(n, n, std::move(t));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nonzeros() const { return values_.size(); }

  std::span<const std::size_t> row_indices(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  double coeff(std::size_t r, std::size_t c) const {
    const auto idx = row_indices(r);
    const auto it = std::lower_bound(idx.begin(), idx.end(), c);
    if (it == idx.end() || *it != c) return 0.0;
    return row_values(r)[static_cast<std::size_t>(it - idx.begin())];
  }

  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nonzeros());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) out.push_back({r, col_idx_[k], values_[k]});
    return out;
  }

  SparseMatrix transpose() const {
    auto t = triplets();
    for (auto& e : t) std::swap(e.row, e.col);
    return SparseMatrix(cols_, rows_, std::move(t));
  }

  SparseMatrix scaled(double factor) const {
    SparseMatrix out = *this;
    for (auto& v : out.values_) v *= factor;
    return out;
  }

  /// Rows selected in the given order.
  SparseMatrix select_rows(std::span<const std::size_t> rows) const {
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto idx = row_indices(rows[i]);
      const auto val = row_values(rows[i]);
      for (std::size_t k = 0; k < idx.size(); ++k) t.push_back({i, idx[k], val[k]});
    }
    return SparseMatrix(rows.size(), cols_, std::move(t));
  }

  Eigen::MatrixXd to_dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        d(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col_idx_[k])) += values_[k];
    return d;
  }

  Eigen::SparseMatrix<double> to_eigen() const {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(nonzeros());
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
        t.emplace_back(static_cast<int>(r), static_cast<int>(col_idx_[k]), values_[k]);
    Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
    m.setFromTriplets(t.begin(), t.end());
    return m;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

namespace detail {
inline void check_length(const char* what, std::size_t expected, std::size_t got, std::size_t rows,
                         std::size_t cols) {
  if (expected != got) {
    std::ostringstream msg;
    msg << what << ": matrix is " << rows << "x" << cols << " but vector has length " << got;
    throw DimensionError(msg.str());
  }
}
}  // namespace detail

inline std::vector<double> matvec(const SparseMatrix& m, std::span<const double> v) {
  detail::check_length("matvec", m.cols(), v.size(), m.rows(), m.cols());
  std::vector<double> out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto idx = m.row_indices(r);
    const auto val = m.row_values(r);
    double s = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) s += val[k] * v[idx[k]];
    out[r] = s;
  }
  return out;
}

/// M' v without forming the transpose.
inline std::vector<double> matvec_transpose(const SparseMatrix& m, std::span<const double> v) {
  detail::check_length("matvec_transpose", m.rows(), v.size(), m.rows(), m.cols());
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto idx = m.row_indices(r);
    const auto val = m.row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) out[idx[k]] += val[k] * v[r];
  }
  return out;
}

/// Accumulates triplets at row/column offsets; used to assemble block matrices.
class BlockBuilder {
 public:
  BlockBuilder(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {}

  void add(std::size_t row, std::size_t col, double value) { entries_.push_back({row, col, value}); }

  void add_block(std::size_t row_offset, std::size_t col_offset, const SparseMatrix& block, double scale = 1.0) {
    for (std::size_t r = 0; r < block.rows(); ++r) {
      const auto idx = block.row_indices(r);
      const auto val = block.row_values(r);
      for (std::size_t k = 0; k < idx.size(); ++k)
        entries_.push_back({row_offset + r, col_offset + idx[k], scale * val[k]});
    }
  }

  SparseMatrix build() && { return SparseMatrix(rows_, cols_, std::move(entries_)); }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<Triplet> entries_;
};

/// Debug dump: one `row col value` line per stored entry.
inline void write_triplets(std::ostream& os, const SparseMatrix& m) {
  const auto old_flags = os.flags();
  const auto old_precision = os.precision(17);
  for (const auto& t : m.triplets()) os << t.row << ' ' << t.col << ' ' << t.value << '\n';
  os.precision(old_precision);
  os.flags(old_flags);
}

}  // namespace str
