#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qlouvain/error.hpp"
#include "qlouvain/graph.hpp"

namespace qlouvain {

using CommunityId = std::size_t;

/// Node-to-community assignment with the per-community sums needed for
/// modularity: the degree sum and the internal weight (edges and loops
/// counted once).
class CommunityState {
 public:
  CommunityState() = default;

  /// Every node in its own community, community id = node id.
  static CommunityState singletons(const Graph& g) {
    std::vector<CommunityId> ids(g.node_count());
    std::iota(ids.begin(), ids.end(), CommunityId{0});
    return from_assignment(g, ids);
  }

  /// Builds the state for an arbitrary assignment. Ids must be < node_count.
  static CommunityState from_assignment(const Graph& g, std::span<const CommunityId> assignment) {
    if (assignment.size() != g.node_count()) {
      throw DomainError("assignment has " + std::to_string(assignment.size()) + " entries for " +
                        std::to_string(g.node_count()) + " nodes");
    }
    CommunityState cs;
    const std::size_t n = g.node_count();
    cs.community_.assign(assignment.begin(), assignment.end());
    cs.degree_sum_.assign(n, 0.0);
    cs.internal_.assign(n, 0.0);
    cs.size_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = assignment[i];
      if (c >= n) throw DomainError("community id " + std::to_string(c) + " must be below the node count");
      if (cs.size_[c]++ == 0) ++cs.live_;
      cs.degree_sum_[c] += g.degree(i);
      cs.internal_[c] += g.loop_weight(i);
      for (const auto& e : g.neighbors(i)) {
        if (e.to > i && assignment[e.to] == c) cs.internal_[c] += e.weight;
      }
    }
    return cs;
  }

  std::size_t node_count() const noexcept { return community_.size(); }
  CommunityId community(std::size_t node) const { return community_.at(node); }
  std::span<const CommunityId> assignment() const noexcept { return community_; }

  double degree_sum(CommunityId c) const { return degree_sum_.at(c); }
  double internal_weight(CommunityId c) const { return internal_.at(c); }
  std::size_t member_count(CommunityId c) const { return size_.at(c); }
  bool live(CommunityId c) const { return c < size_.size() && size_[c] > 0; }

  /// Number of non-empty communities.
  std::size_t community_count() const noexcept { return live_; }

  /// Non-empty community ids in ascending order.
  std::vector<CommunityId> live_communities() const {
    std::vector<CommunityId> out;
    out.reserve(live_);
    for (CommunityId c = 0; c < size_.size(); ++c) {
      if (size_[c] > 0) out.push_back(c);
    }
    return out;
  }

  /// Sum of weights of edges from node to members of c other than node itself.
  double weight_to(const Graph& g, std::size_t node, CommunityId c) const {
    double w = 0.0;
    for (const auto& e : g.neighbors(node)) {
      if (community_[e.to] == c) w += e.weight;
    }
    return w;
  }

  /// Moves node into target, keeping the community sums current.
  void move(const Graph& g, std::size_t node, CommunityId target) {
    const auto from = community_.at(node);
    if (target >= size_.size()) throw DomainError("community id " + std::to_string(target) + " out of range");
    if (from == target) return;
    const double to_from = weight_to(g, node, from);
    const double to_target = weight_to(g, node, target);
    const double loop = g.loop_weight(node);
    const double k = g.degree(node);

    degree_sum_[from] -= k;
    internal_[from] -= to_from + loop;
    if (--size_[from] == 0) {
      --live_;
      degree_sum_[from] = 0.0;
      internal_[from] = 0.0;
    }
    if (size_[target]++ == 0) ++live_;
    degree_sum_[target] += k;
    internal_[target] += to_target + loop;
    community_[node] = target;
  }

 private:
  std::vector<CommunityId> community_;
  std::vector<double> degree_sum_;
  std::vector<double> internal_;
  std::vector<std::size_t> size_;
  std::size_t live_ = 0;
};

namespace detail {
inline void require_weight(const Graph& g) {
  if (!(g.total_weight() > 0.0)) throw DomainError("modularity is undefined for a graph with zero total weight");
}
}  // namespace detail

/// Q = (1/2W) sum_i e_{i->C(i)} - sum_C (deg_C / 2W)^2.
///
/// The first sum counts each internal edge from both ends and each loop
/// twice, so it equals twice the summed internal weights.
inline double modularity(const Graph& g, const CommunityState& cs) {
  detail::require_weight(g);
  const double w = g.total_weight();
  double q = 0.0;
  for (const auto c : cs.live_communities()) {
    const double frac = cs.degree_sum(c) / (2.0 * w);
    q += cs.internal_weight(c) / w - frac * frac;
  }
  return q;
}

/// 2W * Q, i.e. sum_i e_{i->C(i)} - sum_C deg_C^2 / 2W.
inline double unnormalized_modularity(const Graph& g, const CommunityState& cs) {
  return 2.0 * g.total_weight() * modularity(g, cs);
}

/// Change in modularity from moving node into target, in O(deg(node)).
inline double modularity_gain(const Graph& g, const CommunityState& cs, std::size_t node, CommunityId target) {
  const auto from = cs.community(node);
  if (from == target) return 0.0;
  detail::require_weight(g);
  const double w = g.total_weight();
  const double k = g.degree(node);
  double to_from = 0.0, to_target = 0.0;
  for (const auto& e : g.neighbors(node)) {
    const auto c = cs.community(e.to);
    if (c == from) to_from += e.weight;
    else if (c == target) to_target += e.weight;
  }
  const double tot_target = cs.live(target) ? cs.degree_sum(target) : 0.0;
  const double tot_from = cs.degree_sum(from);
  return (to_target - to_from) / w - k * (tot_target - tot_from + k) / (2.0 * w * w);
}

/// Candidate with the largest positive gain; the node's current community when
/// no candidate has a positive gain. Ties go to the earliest candidate.
inline CommunityId best_community(const Graph& g, const CommunityState& cs, std::size_t node,
                                  std::span<const CommunityId> candidates) {
  CommunityId best = cs.community(node);
  double best_gain = 0.0;
  for (const auto c : candidates) {
    const double gain = modularity_gain(g, cs, node, c);
    if (gain > best_gain) {
      best_gain = gain;
      best = c;
    }
  }
  return best;
}

/// Distinct communities of node's first `limit` neighbors (all when limit is
/// 0), in adjacency order.
inline std::vector<CommunityId> neighbor_communities(const Graph& g, const CommunityState& cs, std::size_t node,
                                                     std::size_t limit = 0) {
  std::vector<CommunityId> out;
  const auto nbrs = g.neighbors(node);
  const std::size_t take = limit == 0 ? nbrs.size() : std::min(limit, nbrs.size());
  for (std::size_t k = 0; k < take; ++k) {
    const auto c = cs.community(nbrs[k].to);
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  }
  return out;
}

struct CandidateEvent {
  std::size_t node;
  CommunityId target;
  double gain;
  const CommunityState& before;
};

struct MoveEvent {
  std::size_t node;
  CommunityId from;
  CommunityId to;
  double gain;
  const CommunityState& after;
};

struct SweepOptions {
  /// Only the first candidate_limit neighbors supply candidate communities (0 = all).
  std::size_t candidate_limit = 0;
  /// Called for every candidate evaluated, before any move.
  std::function<void(const CandidateEvent&)> on_candidate;
  /// Called after every accepted move.
  std::function<void(const MoveEvent&)> on_move;
};

struct SweepResult {
  std::size_t moves = 0;
  double gain = 0.0;
};

/// One pass over all nodes in index order, moving each to its best neighbor community.
inline SweepResult sweep(const Graph& g, CommunityState& cs, const SweepOptions& opts = {}) {
  SweepResult result;
  for (std::size_t node = 0; node < g.node_count(); ++node) {
    const auto candidates = neighbor_communities(g, cs, node, opts.candidate_limit);
    CommunityId best = cs.community(node);
    double best_gain = 0.0;
    for (const auto c : candidates) {
      const double gain = modularity_gain(g, cs, node, c);
      if (opts.on_candidate) opts.on_candidate({node, c, gain, cs});
      if (gain > best_gain) {
        best_gain = gain;
        best = c;
      }
    }
    if (best != cs.community(node)) {
      const auto from = cs.community(node);
      cs.move(g, node, best);
      ++result.moves;
      result.gain += best_gain;
      if (opts.on_move) opts.on_move({node, from, best, best_gain, cs});
    }
  }
  return result;
}

struct OneLevelOptions {
  double min_gain = 1e-7;
  std::size_t max_sweeps = 1000;
  SweepOptions sweep;
};

struct OneLevelResult {
  bool converged = false;
  std::size_t sweeps = 0;
  std::size_t moves = 0;
  double gain = 0.0;
};

/// Repeats sweeps until one gains less than min_gain in total (or makes no
/// move). converged is false only if max_sweeps ran out first.
inline OneLevelResult one_level(const Graph& g, CommunityState& cs, const OneLevelOptions& opts = {}) {
  if (!(opts.min_gain >= 0.0)) throw DomainError("min_gain must be nonnegative");
  OneLevelResult result;
  while (result.sweeps < opts.max_sweeps) {
    const auto s = sweep(g, cs, opts.sweep);
    ++result.sweeps;
    result.moves += s.moves;
    result.gain += s.gain;
    if (s.moves == 0 || s.gain < opts.min_gain) {
      result.converged = true;
      break;
    }
  }
  return result;
}

struct Aggregation {
  Graph graph;
  /// Coarse node of every fine node. Coarse ids follow first appearance in node order.
  std::vector<std::size_t> mapping;
};

/// Collapses each community into one node. Internal weight becomes the coarse
/// node's loop weight; edges between two communities are summed into one.
inline Aggregation aggregate(const Graph& g, const CommunityState& cs) {
  const std::size_t n = g.node_count();
  std::vector<std::size_t> renumber(n, std::numeric_limits<std::size_t>::max());
  std::vector<std::size_t> mapping(n);
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = renumber[cs.community(i)];
    if (r == std::numeric_limits<std::size_t>::max()) r = next++;
    mapping[i] = r;
  }
  GraphBuilder b(next);
  for (std::size_t i = 0; i < n; ++i) {
    if (g.loop_weight(i) > 0.0) b.add_edge(mapping[i], mapping[i], g.loop_weight(i));
    for (const auto& e : g.neighbors(i)) {
      if (e.to > i) b.add_edge(mapping[i], mapping[e.to], e.weight);
    }
  }
  return {b.build(), std::move(mapping)};
}

struct DendrogramLevel {
  /// Community of every node of the previous level (original nodes for level 0).
  std::vector<std::size_t> mapping;
  double modularity = 0.0;
  double unnormalized_modularity = 0.0;
  std::size_t community_count = 0;
  std::size_t sweeps = 0;
  std::size_t moves = 0;
};

struct Dendrogram {
  std::size_t node_count = 0;
  std::vector<DendrogramLevel> levels;

  /// Community of every original node after composing levels [0, level].
  std::vector<std::size_t> assignment(std::size_t level) const {
    if (level >= levels.size()) throw DomainError("dendrogram has no level " + std::to_string(level));
    std::vector<std::size_t> out(node_count);
    std::iota(out.begin(), out.end(), std::size_t{0});
    for (std::size_t l = 0; l <= level; ++l) {
      for (auto& c : out) c = levels[l].mapping.at(c);
    }
    return out;
  }

  std::vector<std::size_t> final_assignment() const {
    if (levels.empty()) {
      std::vector<std::size_t> out(node_count);
      std::iota(out.begin(), out.end(), std::size_t{0});
      return out;
    }
    return assignment(levels.size() - 1);
  }

  double final_modularity() const { return levels.empty() ? 0.0 : levels.back().modularity; }
};

struct LouvainOptions {
  double min_gain = 1e-7;
  std::size_t max_sweeps = 1000;
  SweepOptions sweep;
};

/// Full multi-level Louvain: optimize, aggregate, repeat.
///
/// The first level is always recorded. Later levels are kept only while they
/// raise modularity by at least min_gain (and by a positive amount), so the
/// recorded values are strictly increasing.
inline Dendrogram louvain(const Graph& g, const LouvainOptions& opts = {}) {
  detail::require_weight(g);
  Dendrogram d;
  d.node_count = g.node_count();
  Graph current = g;
  double previous = 0.0;
  OneLevelOptions lo{opts.min_gain, opts.max_sweeps, opts.sweep};
  while (true) {
    auto cs = CommunityState::singletons(current);
    const auto r = one_level(current, cs, lo);
    const double q = modularity(current, cs);
    if (!d.levels.empty()) {
      const double improvement = q - previous;
      if (!(improvement > 0.0) || improvement < opts.min_gain) break;
    }
    auto agg = aggregate(current, cs);
    d.levels.push_back({agg.mapping, q, 2.0 * current.total_weight() * q, cs.community_count(), r.sweeps, r.moves});
    previous = q;
    if (agg.graph.node_count() == current.node_count()) break;
    current = std::move(agg.graph);
  }
  return d;
}

inline std::string dendrogram_text(const Dendrogram& d) {
  std::ostringstream out;
  for (std::size_t l = 0; l < d.levels.size(); ++l) {
    out << "level " << l + 1 << ':';
    const auto& m = d.levels[l].mapping;
    for (std::size_t i = 0; i < m.size(); ++i) out << ' ' << i << ' ' << m[i];
    out << '\n';
  }
  return out.str();
}

inline nlohmann::json dendrogram_metrics(const Dendrogram& d) {
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t l = 0; l < d.levels.size(); ++l) {
    const auto& lv = d.levels[l];
    levels.push_back({{"level", l + 1},
                      {"nodes", lv.mapping.size()},
                      {"communities", lv.community_count},
                      {"modularity", lv.modularity},
                      {"unnormalized_modularity", lv.unnormalized_modularity},
                      {"sweeps", lv.sweeps},
                      {"moves", lv.moves}});
  }
  return {{"nodes", d.node_count}, {"levels", levels}, {"final_modularity", d.final_modularity()}};
}

}  // namespace qlouvain
