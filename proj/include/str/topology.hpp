#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "str/errors.hpp"

namespace str {

using NodeId = std::size_t;

enum class TopologyKind { cycle, graph };

/// Directed graph of seasons. A cycle is the usual cylinder; graphs allow
/// branching structures such as working-day/holiday cycles joined by
/// transition paths.
class SeasonTopology {
 public:
  SeasonTopology() = default;

  /// Builds a graph topology from an edge list. Every node needs at least one
  /// predecessor and one successor.
  static SeasonTopology from_edges(std::size_t node_count, const std::vector<std::pair<NodeId, NodeId>>& edges) {
    return SeasonTopology(node_count, edges, TopologyKind::graph);
  }

  static SeasonTopology cycle(std::size_t m) {
    if (m < 2) throw ConfigError("a seasonal cycle needs at least 2 seasons, got " + std::to_string(m));
    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(m);
    for (NodeId k = 0; k < m; ++k) edges.emplace_back(k, (k + 1) % m);
    return SeasonTopology(m, edges, TopologyKind::cycle);
  }

  TopologyKind kind() const { return kind_; }
  std::size_t size() const { return successors_.size(); }
  const std::vector<NodeId>& successors(NodeId k) const { return successors_.at(k); }
  const std::vector<NodeId>& predecessors(NodeId k) const { return predecessors_.at(k); }
  const std::vector<std::pair<NodeId, NodeId>>& edges() const { return edges_; }

  bool has_edge(NodeId from, NodeId to) const {
    const auto& s = successors_.at(from);
    return std::find(s.begin(), s.end(), to) != s.end();
  }

  /// Node removed by the sum-to-zero reduction.
  NodeId eliminated_node() const { return size() - 1; }

  friend bool operator==(const SeasonTopology&, const SeasonTopology&) = default;

 private:
  SeasonTopology(std::size_t node_count, const std::vector<std::pair<NodeId, NodeId>>& edges, TopologyKind kind)
      : kind_(kind), successors_(node_count), predecessors_(node_count) {
    if (node_count < 2) throw ConfigError("a season topology needs at least 2 nodes");
    for (const auto& [from, to] : edges) {
      if (from >= node_count || to >= node_count) {
        std::ostringstream msg;
        msg << "edge " << from << " -> " << to << " refers to a node outside 0.." << node_count - 1;
        throw ConfigError(msg.str());
      }
      if (has_edge_raw(from, to)) continue;
      successors_[from].push_back(to);
      predecessors_[to].push_back(from);
      edges_.emplace_back(from, to);
    }
    for (NodeId k = 0; k < node_count; ++k) {
      std::sort(successors_[k].begin(), successors_[k].end());
      std::sort(predecessors_[k].begin(), predecessors_[k].end());
      if (successors_[k].empty() || predecessors_[k].empty()) {
        std::ostringstream msg;
        msg << "season node " << k << " has no " << (successors_[k].empty() ? "successor" : "predecessor");
        throw ConfigError(msg.str());
      }
    }
    std::sort(edges_.begin(), edges_.end());
  }

  bool has_edge_raw(NodeId from, NodeId to) const {
    const auto& s = successors_[from];
    return std::find(s.begin(), s.end(), to) != s.end();
  }

  TopologyKind kind_ = TopologyKind::graph;
  std::vector<std::vector<NodeId>> successors_;
  std::vector<std::vector<NodeId>> predecessors_;
  std::vector<std::pair<NodeId, NodeId>> edges_;
};

inline SeasonTopology make_cycle(std::size_t m) { return SeasonTopology::cycle(m); }

/// Working-day and holiday cycles of `day_len` nodes joined by two transition
/// paths of `transition_len` interior nodes each.
///
/// Node layout: working day 0..d-1, holiday d..2d-1, working-to-holiday
/// transition 2d..2d+L-1, holiday-to-working transition 2d+L..2d+2L-1.
/// Working node `split_at` branches into the first transition, which ends at
/// holiday node 0; holiday node `split_at` branches into the second, which
/// ends at working node 0.
inline SeasonTopology make_two_cylinder(std::size_t day_len, std::size_t transition_len, std::size_t split_at) {
  if (day_len < 2) throw ConfigError("two-cylinder topology needs day_len >= 2");
  if (split_at == 0 || split_at >= day_len) {
    throw ConfigError("two-cylinder split point must satisfy 0 < split_at < day_len");
  }
  const std::size_t d = day_len;
  const std::size_t l = transition_len;
  const NodeId work0 = 0;
  const NodeId hol0 = d;
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId k = 0; k < d; ++k) {
    edges.emplace_back(work0 + k, work0 + (k + 1) % d);
    edges.emplace_back(hol0 + k, hol0 + (k + 1) % d);
  }
  auto add_path = [&](NodeId from, NodeId first_interior, NodeId to) {
    NodeId prev = from;
    for (std::size_t j = 0; j < l; ++j) {
      edges.emplace_back(prev, first_interior + j);
      prev = first_interior + j;
    }
    edges.emplace_back(prev, to);
  };
  add_path(work0 + split_at, 2 * d, hol0);
  add_path(hol0 + split_at, 2 * d + l, work0);
  return SeasonTopology::from_edges(2 * d + 2 * l, edges);
}

/// Season node observed at each time index (0-based).
class SeasonMap {
 public:
  SeasonMap() = default;

  /// kappa(t) = (t + phase) mod m.
  static SeasonMap cycle(std::size_t m, std::size_t length, std::size_t phase = 0) {
    SeasonMap map;
    map.cycle_period_ = m;
    map.phase_ = phase % m;
    map.assignment_.resize(length);
    for (std::size_t t = 0; t < length; ++t) map.assignment_[t] = (t + map.phase_) % m;
    return map;
  }

  static SeasonMap explicit_assignment(std::vector<NodeId> assignment) {
    SeasonMap map;
    map.assignment_ = std::move(assignment);
    return map;
  }

  std::size_t length() const { return assignment_.size(); }
  NodeId operator[](std::size_t t) const { return assignment_.at(t); }
  const std::vector<NodeId>& assignment() const { return assignment_; }

  /// Period and phase when generated by the cycle rule; such maps extend to any length.
  std::optional<std::size_t> cycle_period() const { return cycle_period_; }
  std::size_t phase() const { return phase_; }

  SeasonMap extended(std::size_t length) const {
    if (length <= assignment_.size()) {
      return explicit_assignment_with(std::vector<NodeId>(assignment_.begin(), assignment_.begin() + static_cast<std::ptrdiff_t>(length)));
    }
    if (!cycle_period_) {
      throw ConfigError("season map covers " + std::to_string(assignment_.size()) + " times but " +
                        std::to_string(length) + " are needed");
    }
    return cycle(*cycle_period_, length, phase_);
  }

  /// Checks nodes exist and consecutive assignments follow topology edges.
  void validate(const SeasonTopology& topo, std::size_t n) const {
    if (assignment_.size() < n) {
      throw ConfigError("season map covers " + std::to_string(assignment_.size()) + " times, series has " +
                        std::to_string(n));
    }
    for (std::size_t t = 0; t < n; ++t) {
      if (assignment_[t] >= topo.size()) {
        throw ConfigError("season map assigns node " + std::to_string(assignment_[t]) + " at time " +
                          std::to_string(t) + " but the topology has " + std::to_string(topo.size()) + " nodes");
      }
      if (t > 0 && !topo.has_edge(assignment_[t - 1], assignment_[t])) {
        std::ostringstream msg;
        msg << "season map step " << assignment_[t - 1] << " -> " << assignment_[t] << " at time " << t
            << " is not an edge of the topology";
        throw ConfigError(msg.str());
      }
    }
  }

  friend bool operator==(const SeasonMap&, const SeasonMap&) = default;

 private:
  SeasonMap explicit_assignment_with(std::vector<NodeId> a) const {
    SeasonMap map = *this;
    map.assignment_ = std::move(a);
    return map;
  }

  std::vector<NodeId> assignment_;
  std::optional<std::size_t> cycle_period_;
  std::size_t phase_ = 0;
};

}  // namespace str
