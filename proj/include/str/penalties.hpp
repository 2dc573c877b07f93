#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "str/errors.hpp"
#include "str/sparse_matrix.hpp"
#include "str/topology.hpp"

namespace str {

/// Reduced coordinates of a seasonal surface S (nodes x n) whose columns sum to
/// zero: the eliminated (last) node is dropped and the rest stored time-major,
/// index(k, t) = t * (m - 1) + k.
struct SurfaceLayout {
  std::size_t nodes = 0;
  std::size_t n = 0;

  std::size_t size() const { return n * (nodes - 1); }
  NodeId eliminated() const { return nodes - 1; }
  std::optional<std::size_t> coordinate(NodeId k, std::size_t t) const {
    if (k == eliminated()) return std::nullopt;
    return t * (nodes - 1) + k;
  }
};

/// Full surface from reduced coordinates; the eliminated row is minus the column sums.
inline Eigen::MatrixXd embed_surface(const SurfaceLayout& layout, std::span<const double> reduced) {
  if (reduced.size() != layout.size()) throw DimensionError("embed_surface: reduced vector has wrong length");
  const auto m = static_cast<Eigen::Index>(layout.nodes);
  const auto n = static_cast<Eigen::Index>(layout.n);
  Eigen::MatrixXd s(m, n);
  for (Eigen::Index t = 0; t < n; ++t) {
    double sum = 0.0;
    for (Eigen::Index k = 0; k + 1 < m; ++k) {
      const double v = reduced[static_cast<std::size_t>(t * (m - 1) + k)];
      s(k, t) = v;
      sum += v;
    }
    s(m - 1, t) = -sum;
  }
  return s;
}

inline std::vector<double> reduce_surface(const Eigen::MatrixXd& surface) {
  const Eigen::Index m = surface.rows();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>((m - 1) * surface.cols()));
  for (Eigen::Index t = 0; t < surface.cols(); ++t)
    for (Eigen::Index k = 0; k + 1 < m; ++k) out.push_back(surface(k, t));
  return out;
}

namespace detail {

/// Collects stencil rows written against full-surface entries (k, t) and
/// folds the eliminated node into the reduced coordinates.
class ReducedRows {
 public:
  explicit ReducedRows(SurfaceLayout layout) : layout_(layout) {}

  void add(NodeId k, std::size_t t, double v) {
    if (auto c = layout_.coordinate(k, t)) {
      entries_.push_back({row_, *c, v});
      return;
    }
    for (NodeId j = 0; j + 1 < layout_.nodes; ++j) entries_.push_back({row_, *layout_.coordinate(j, t), -v});
  }
  void next_row() { ++row_; }

  SparseMatrix build() && { return SparseMatrix(row_, layout_.size(), std::move(entries_)); }

 private:
  SurfaceLayout layout_;
  std::size_t row_ = 0;
  std::vector<Triplet> entries_;
};

}  // namespace detail

/// Second-difference operators of one seasonal surface, in reduced coordinates.
struct PenaltySet {
  SurfaceLayout layout;
  /// Time direction: S[k,t] - 2 S[k,t-1] + S[k,t-2], one row per (t, k).
  SparseMatrix tt;
  /// Mixed direction: time difference of the season difference along each edge k -> s.
  SparseMatrix st;
  /// Season direction: S[s,t] - 2 S[k,t] + S[p,t] for every path p -> k -> s.
  SparseMatrix ss;
};

inline PenaltySet build_penalties(const SeasonTopology& topo, std::size_t n) {
  if (n < 3) throw ConfigError("seasonal penalties need at least 3 time points");
  const SurfaceLayout layout{topo.size(), n};
  const std::size_t m = topo.size();

  detail::ReducedRows tt(layout);
  for (std::size_t t = 2; t < n; ++t) {
    for (NodeId k = 0; k < m; ++k) {
      tt.add(k, t, 1.0);
      tt.add(k, t - 1, -2.0);
      tt.add(k, t - 2, 1.0);
      tt.next_row();
    }
  }

  detail::ReducedRows st(layout);
  for (std::size_t t = 1; t < n; ++t) {
    for (const auto& [k, s] : topo.edges()) {
      st.add(s, t, 1.0);
      st.add(k, t, -1.0);
      st.add(s, t - 1, -1.0);
      st.add(k, t - 1, 1.0);
      st.next_row();
    }
  }

  detail::ReducedRows ss(layout);
  for (std::size_t t = 0; t < n; ++t) {
    for (NodeId k = 0; k < m; ++k) {
      for (NodeId p : topo.predecessors(k)) {
        for (NodeId s : topo.successors(k)) {
          ss.add(s, t, 1.0);
          ss.add(k, t, -2.0);
          ss.add(p, t, 1.0);
          ss.next_row();
        }
      }
    }
  }

  return PenaltySet{layout, std::move(tt).build(), std::move(st).build(), std::move(ss).build()};
}

/// (n-2) x n second-difference matrix for the trend and flexible coefficients.
inline SparseMatrix build_trend_penalty(std::size_t n) {
  if (n < 3) throw ConfigError("trend penalty needs at least 3 time points, got " + std::to_string(n));
  std::vector<Triplet> t;
  t.reserve(3 * (n - 2));
  for (std::size_t r = 0; r + 2 < n; ++r) {
    t.push_back({r, r, 1.0});
    t.push_back({r, r + 1, -2.0});
    t.push_back({r, r + 2, 1.0});
  }
  return SparseMatrix(n - 2, n, std::move(t));
}

}  // namespace str
