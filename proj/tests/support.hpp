#pragma once

// Test-only graph fixtures and brute-force oracles. Nothing here calls into
// the incremental modularity code it is used to check.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qlouvain/graph.hpp"

namespace qlouvain::testing {

/// k cliques of `size` nodes; clique c holds nodes c*size..c*size+size-1.
/// Edges inside cliques come first (lexicographic), then one link from the
/// last node of each clique to the first node of the next.
inline Graph ring_of_cliques(std::size_t k, std::size_t size, double weight = 1.0) {
  GraphBuilder b(k * size);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = i + 1; j < size; ++j) b.add_edge(c * size + i, c * size + j, weight);
    }
  }
  for (std::size_t c = 0; c < k; ++c) b.add_edge(c * size + size - 1, ((c + 1) % k) * size, weight);
  return b.build();
}

/// Two 4-cliques {0..3} and {4..7} joined by the edge 3-4.
inline Graph two_cliques() {
  GraphBuilder b(8);
  for (std::size_t base : {0u, 4u}) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = i + 1; j < 4; ++j) b.add_edge(base + i, base + j, 1.0);
    }
  }
  b.add_edge(3, 4, 1.0);
  return b.build();
}

/// Erdos-Renyi style graph with random weights in [0.1, 2] and optional loops.
template <typename Rng>
Graph random_graph(std::size_t n, double edge_prob, Rng& rng, bool loops = true) {
  std::uniform_real_distribution<double> u(0.0, 1.0), w(0.1, 2.0);
  GraphBuilder b(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (u(rng) < edge_prob) b.add_edge(i, j, w(rng));
    }
    if (loops && u(rng) < 0.2) b.add_edge(i, i, w(rng));
  }
  return b.build();
}

/// Literal double-sum modularity over a dense adjacency matrix with A_ii = 2 * loop:
/// Q = (1/2W) sum_i sum_{j in C(i)} A_ij - sum_C (sum_{i in C} k_i / 2W)^2.
inline double brute_modularity(const Graph& g, const std::vector<std::size_t>& community) {
  const std::size_t n = g.node_count();
  std::vector<std::vector<double>> a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    a[i][i] = 2.0 * g.loop_weight(i);
    for (const auto& e : g.neighbors(i)) a[i][e.to] += e.weight;
  }
  double two_w = 0.0;
  std::vector<double> k(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[i] += a[i][j];
    two_w += k[i];
  }
  double internal = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (community[i] == community[j]) internal += a[i][j];
    }
  }
  double expected = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    double deg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (community[i] == c) deg += k[i];
    }
    expected += (deg / two_w) * (deg / two_w);
  }
  return internal / two_w - expected;
}

/// Calls fn on every set partition of n elements (restricted growth strings).
inline void for_each_partition(std::size_t n, const std::function<void(const std::vector<std::size_t>&)>& fn) {
  std::vector<std::size_t> a(n, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t max_used) {
    if (i == n) {
      fn(a);
      return;
    }
    for (std::size_t c = 0; c <= max_used + 1 && c < n; ++c) {
      a[i] = c;
      rec(i + 1, std::max(max_used, c));
    }
  };
  if (n == 0) return;
  a[0] = 0;
  if (n == 1) {
    fn(a);
    return;
  }
  rec(1, 0);
}

/// Best modularity over all partitions, by exhaustive enumeration.
inline double best_partition_modularity(const Graph& g) {
  double best = -1.0;
  for_each_partition(g.node_count(), [&](const std::vector<std::size_t>& p) {
    best = std::max(best, brute_modularity(g, p));
  });
  return best;
}

/// True when two assignments describe the same partition (ids may differ).
inline bool same_partition(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if ((a[i] == a[j]) != (b[i] == b[j])) return false;
    }
  }
  return true;
}

inline std::filesystem::path write_temp(const std::string& name, const std::string& content) {
  auto dir = std::filesystem::temp_directory_path() / "qlouvain_tests";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::ofstream(path, std::ios::binary) << content;
  return path;
}

}  // namespace qlouvain::testing
