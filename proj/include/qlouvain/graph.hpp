#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "qlouvain/error.hpp"

namespace qlouvain {

class Graph;
template <typename Fn>
Graph map_weights(const Graph& g, Fn&& fn);

struct Edge {
  std::size_t to;
  double weight;

  bool operator==(const Edge&) const = default;
};

/// Undirected weighted graph.
///
/// Self-loops are stored separately from the adjacency lists. A loop counts
/// twice towards its node's degree and once towards the total weight, so the
/// degrees always sum to twice the total weight.
class Graph {
 public:
  Graph() = default;

  std::size_t node_count() const noexcept { return adjacency_.size(); }

  /// Number of distinct non-loop undirected edges.
  std::size_t edge_count() const noexcept { return edge_count_; }

  std::span<const Edge> neighbors(std::size_t node) const { return adjacency_.at(node); }
  double loop_weight(std::size_t node) const { return loops_.at(node); }
  double degree(std::size_t node) const { return degrees_.at(node); }
  double total_weight() const noexcept { return total_weight_; }

  bool operator==(const Graph&) const = default;

 private:
  friend class GraphBuilder;
  template <typename Fn>
  friend Graph map_weights(const Graph& g, Fn&& fn);

  std::vector<std::vector<Edge>> adjacency_;
  std::vector<double> loops_;
  std::vector<double> degrees_;
  double total_weight_ = 0.0;
  std::size_t edge_count_ = 0;
};

enum class DuplicatePolicy { kSum, kError };

/// Accumulates undirected edges and produces a Graph.
///
/// Adjacency order follows the order in which each undirected edge was first
/// added. Repeated edges are summed (or rejected under DuplicatePolicy::kError).
class GraphBuilder {
 public:
  explicit GraphBuilder(std::size_t node_count, DuplicatePolicy policy = DuplicatePolicy::kSum)
      : node_count_(node_count), policy_(policy), loops_(node_count, 0.0), loop_seen_(node_count, false) {}

  std::size_t node_count() const noexcept { return node_count_; }

  void add_edge(std::size_t u, std::size_t v, double weight) {
    if (u >= node_count_ || v >= node_count_) {
      throw StructureError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                           ") outside node range [0, " + std::to_string(node_count_) + ")");
    }
    if (!(weight >= 0.0) || weight == std::numeric_limits<double>::infinity()) {
      throw DomainError("edge weight must be finite and nonnegative, got " + std::to_string(weight));
    }
    if (u == v) {
      if (loop_seen_[u] && policy_ == DuplicatePolicy::kError) {
        throw StructureError("duplicate self-loop on node " + std::to_string(u));
      }
      loop_seen_[u] = true;
      loops_[u] += weight;
      return;
    }
    const auto key = pair_key(u, v);
    if (auto it = index_.find(key); it != index_.end()) {
      if (policy_ == DuplicatePolicy::kError) {
        throw StructureError("duplicate edge (" + std::to_string(u) + ", " + std::to_string(v) + ")");
      }
      edges_[it->second].weight += weight;
      return;
    }
    index_.emplace(key, edges_.size());
    edges_.push_back({u, v, weight});
  }

  Graph build() const {
    Graph g;
    g.adjacency_.assign(node_count_, {});
    g.loops_ = loops_;
    g.degrees_.assign(node_count_, 0.0);
    g.edge_count_ = edges_.size();
    double total = 0.0;
    for (const auto& e : edges_) {
      g.adjacency_[e.u].push_back({e.v, e.weight});
      g.adjacency_[e.v].push_back({e.u, e.weight});
      total += e.weight;
    }
    for (std::size_t i = 0; i < node_count_; ++i) {
      double d = 2.0 * loops_[i];
      for (const auto& e : g.adjacency_[i]) d += e.weight;
      g.degrees_[i] = d;
      total += loops_[i];
    }
    g.total_weight_ = total;
    return g;
  }

 private:
  struct PendingEdge {
    std::size_t u, v;
    double weight;
  };

  static std::uint64_t pair_key(std::size_t u, std::size_t v) {
    if (u > v) std::swap(u, v);
    return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(v);
  }

  std::size_t node_count_;
  DuplicatePolicy policy_;
  std::vector<double> loops_;
  std::vector<bool> loop_seen_;
  std::vector<PendingEdge> edges_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Returns a copy of g with every edge and loop weight passed through fn.
/// Adjacency order is unchanged; degrees and total weight are recomputed.
template <typename Fn>
Graph map_weights(const Graph& g, Fn&& fn) {
  Graph out = g;
  double total = 0.0;
  for (std::size_t u = 0; u < out.node_count(); ++u) {
    double d = 0.0;
    for (auto& e : out.adjacency_[u]) {
      e.weight = fn(e.weight);
      d += e.weight;
      if (u < e.to) total += e.weight;
    }
    if (out.loops_[u] > 0.0) out.loops_[u] = fn(out.loops_[u]);
    d += 2.0 * out.loops_[u];
    out.degrees_[u] = d;
    total += out.loops_[u];
  }
  out.total_weight_ = total;
  return out;
}

inline constexpr double kNormalizedMin = 0.000001;
inline constexpr double kNormalizedMax = 1.0;

/// Affinely rescales all edge and loop weights into [0.000001, 1].
///
/// The smallest weight maps to 0.000001 and the largest to 1. When every
/// weight is equal they all become 1.
inline Graph normalize_weights(const Graph& g) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  bool any = false;
  for (std::size_t u = 0; u < g.node_count(); ++u) {
    for (const auto& e : g.neighbors(u)) {
      lo = std::min(lo, e.weight);
      hi = std::max(hi, e.weight);
      any = true;
    }
    if (g.loop_weight(u) > 0.0) {
      lo = std::min(lo, g.loop_weight(u));
      hi = std::max(hi, g.loop_weight(u));
      any = true;
    }
  }
  if (!any) throw DomainError("cannot normalize the weights of a graph without edges");
  if (hi == lo) return map_weights(g, [](double) { return kNormalizedMax; });
  const double scale = (kNormalizedMax - kNormalizedMin) / (hi - lo);
  return map_weights(g, [=](double w) { return kNormalizedMin + (w - lo) * scale; });
}

/// Node id used for slots that do not refer to a real neighbor.
inline constexpr std::int64_t kDummyNode = -1;
inline constexpr double kDummyWeight = -1.0;

struct Slot {
  std::int64_t node = kDummyNode;
  double weight = kDummyWeight;

  bool dummy() const noexcept { return node == kDummyNode; }
  bool operator==(const Slot&) const = default;
};

/// Fixed-width view of a node's neighborhood: slot 0 is the node itself
/// (weight = its loop weight), then its first neighbors in adjacency order,
/// then dummies.
struct NeighborSlots {
  std::size_t node = 0;
  std::vector<Slot> slots;

  bool operator==(const NeighborSlots&) const = default;
};

inline NeighborSlots neighbor_slots(const Graph& g, std::size_t node, std::size_t action_size) {
  if (node >= g.node_count()) {
    throw DomainError("node " + std::to_string(node) + " out of range (node count " +
                      std::to_string(g.node_count()) + ")");
  }
  if (action_size == 0) throw DomainError("action_size must be at least 1");
  NeighborSlots out{node, std::vector<Slot>(action_size)};
  out.slots[0] = {static_cast<std::int64_t>(node), g.loop_weight(node)};
  const auto nbrs = g.neighbors(node);
  const std::size_t take = std::min(nbrs.size(), action_size - 1);
  for (std::size_t k = 0; k < take; ++k) {
    out.slots[k + 1] = {static_cast<std::int64_t>(nbrs[k].to), nbrs[k].weight};
  }
  return out;
}

}  // namespace qlouvain
