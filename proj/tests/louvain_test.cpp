#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "qlouvain/graph_io.hpp"
#include "qlouvain/louvain.hpp"
#include "support.hpp"

namespace qlouvain {
namespace {

using testing::brute_modularity;

std::vector<std::size_t> to_vec(std::span<const CommunityId> s) { return {s.begin(), s.end()}; }

std::vector<std::size_t> random_partition(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> a(n);
  for (auto& c : a) c = pick(rng);
  return a;
}

TEST(Modularity, AllInOneCommunityIsZero) {
  auto g = testing::two_cliques();
  std::vector<std::size_t> zero(g.node_count(), 0);
  EXPECT_NEAR(modularity(g, CommunityState::from_assignment(g, zero)), 0.0, 1e-15);
}

TEST(Modularity, SingleEdgeSingletons) {
  auto g = parse_edge_list("0 1 1\n");
  EXPECT_DOUBLE_EQ(modularity(g, CommunityState::singletons(g)), -0.5);
}

TEST(Modularity, ZeroWeightRejected) {
  GraphBuilder b(3);
  auto g = b.build();
  EXPECT_THROW(modularity(g, CommunityState::singletons(g)), DomainError);
  EXPECT_THROW(louvain(g), DomainError);
}

TEST(Modularity, MatchesDoubleSum) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(1, 8);
  int checked = 0;
  while (checked < 1000) {
    auto g = testing::random_graph(size(rng), 0.5, rng);
    if (g.total_weight() == 0.0) continue;
    auto p = random_partition(g.node_count(), rng);
    EXPECT_NEAR(modularity(g, CommunityState::from_assignment(g, p)), brute_modularity(g, p), 1e-12);
    ++checked;
  }
}

TEST(ModularityGain, IdentityMoveIsZero) {
  auto g = testing::two_cliques();
  auto cs = CommunityState::singletons(g);
  EXPECT_EQ(modularity_gain(g, cs, 3, cs.community(3)), 0.0);
}

TEST(ModularityGain, TwoDisconnectedEdges) {
  auto g = parse_edge_list("0 1\n2 3\n");
  auto cs = CommunityState::singletons(g);
  // Before: -4 * (1/4)^2 = -0.25. After {0,1}: 2/4 - (2/4)^2 - 2 * (1/4)^2 = 0.125.
  EXPECT_NEAR(modularity_gain(g, cs, 1, cs.community(0)), 0.375, 1e-15);
}

TEST(ModularityGain, MatchesRecompute) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    auto g = testing::random_graph(10, 0.4, rng);
    if (g.total_weight() == 0.0) continue;
    auto p = random_partition(g.node_count(), rng);
    auto cs = CommunityState::from_assignment(g, p);
    for (std::size_t node = 0; node < g.node_count(); ++node) {
      for (std::size_t target = 0; target < g.node_count(); ++target) {
        if (!cs.live(target) && target != cs.community(node)) continue;
        auto moved = p;
        moved[node] = target;
        EXPECT_NEAR(modularity_gain(g, cs, node, target), brute_modularity(g, moved) - brute_modularity(g, p), 1e-12);
      }
    }
  }
}

TEST(BestCommunity, IsolatedNodeStays) {
  GraphBuilder b(3);
  b.add_edge(0, 1, 1.0);
  auto h = b.build();
  auto cs = CommunityState::singletons(h);
  const std::vector<CommunityId> candidates{0, 1};
  EXPECT_EQ(best_community(h, cs, 2, candidates), 2u);
}

TEST(BestCommunity, TriangleTieGoesToFirstCandidate) {
  auto g = parse_edge_list("0 1\n1 2\n0 2\n");
  auto cs = CommunityState::singletons(g);
  std::vector<std::size_t> p{0, 1, 2};
  auto to_b = p, to_c = p;
  to_b[0] = 1;
  to_c[0] = 2;
  ASSERT_NEAR(brute_modularity(g, to_b), brute_modularity(g, to_c), 1e-15);
  ASSERT_GT(brute_modularity(g, to_b), brute_modularity(g, p));
  EXPECT_EQ(best_community(g, cs, 0, std::vector<CommunityId>{1, 2}), 1u);
  EXPECT_EQ(best_community(g, cs, 0, std::vector<CommunityId>{2, 1}), 2u);
}

TEST(BestCommunity, LoneCliqueNodeRejoins) {
  auto g = testing::two_cliques();
  std::vector<std::size_t> p{0, 0, 0, 3, 4, 4, 4, 4};
  auto cs = CommunityState::from_assignment(g, p);
  // Brute-force: try every live community for node 3.
  std::size_t best = 3;
  double best_q = brute_modularity(g, p);
  for (std::size_t c : {0u, 4u}) {
    auto moved = p;
    moved[3] = c;
    if (brute_modularity(g, moved) > best_q) {
      best_q = brute_modularity(g, moved);
      best = c;
    }
  }
  EXPECT_EQ(best, 0u);
  EXPECT_EQ(best_community(g, cs, 3, std::vector<CommunityId>{0, 4}), 0u);
}

TEST(OneLevel, TwoCliquesReachExhaustiveOptimum) {
  auto g = testing::two_cliques();
  auto cs = CommunityState::singletons(g);
  auto r = one_level(g, cs);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(cs.community_count(), 2u);
  EXPECT_TRUE(testing::same_partition(to_vec(cs.assignment()), {0, 0, 0, 0, 1, 1, 1, 1}));
  EXPECT_NEAR(modularity(g, cs), testing::best_partition_modularity(g), 1e-12);
}

TEST(OneLevel, OptimalStartMakesNoMoves) {
  auto g = testing::two_cliques();
  std::vector<std::size_t> p{0, 0, 0, 0, 1, 1, 1, 1};
  auto cs = CommunityState::from_assignment(g, p);
  auto r = one_level(g, cs);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.sweeps, 1u);
  EXPECT_EQ(r.moves, 0u);
}

TEST(OneLevel, EveryGainMatchesRecomputeAndNeverDecreases) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = testing::random_graph(30, 0.15, rng);
    if (g.total_weight() == 0.0) continue;
    auto cs = CommunityState::singletons(g);
    double last = brute_modularity(g, to_vec(cs.assignment()));
    OneLevelOptions opts;
    opts.sweep.on_candidate = [&](const CandidateEvent& e) {
      auto p = to_vec(e.before.assignment());
      const double before = brute_modularity(g, p);
      p[e.node] = e.target;
      EXPECT_NEAR(e.gain, brute_modularity(g, p) - before, 1e-9);
    };
    opts.sweep.on_move = [&](const MoveEvent& e) {
      const double q = brute_modularity(g, to_vec(e.after.assignment()));
      EXPECT_GE(q, last - 1e-12);
      last = q;
    };
    auto r = one_level(g, cs, opts);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.sweeps, 12u);
  }
}

TEST(OneLevel, NegativeMinGainRejected) {
  auto g = testing::two_cliques();
  auto cs = CommunityState::singletons(g);
  OneLevelOptions opts;
  opts.min_gain = -1.0;
  EXPECT_THROW(one_level(g, cs, opts), DomainError);
}

TEST(Aggregate, IdentityWhenSingletons) {
  auto g = testing::two_cliques();
  auto agg = aggregate(g, CommunityState::singletons(g));
  ASSERT_EQ(agg.graph.node_count(), g.node_count());
  EXPECT_DOUBLE_EQ(agg.graph.total_weight(), g.total_weight());
  auto sorted = [](std::span<const Edge> es) {
    std::vector<Edge> v(es.begin(), es.end());
    std::sort(v.begin(), v.end(), [](const Edge& a, const Edge& b) { return a.to < b.to; });
    return v;
  };
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    EXPECT_EQ(sorted(agg.graph.neighbors(i)), sorted(g.neighbors(i))) << "node " << i;
    EXPECT_EQ(agg.graph.loop_weight(i), g.loop_weight(i));
  }
}

TEST(Aggregate, TwoCliquesCollapse) {
  auto g = testing::two_cliques();
  std::vector<std::size_t> p{0, 0, 0, 0, 1, 1, 1, 1};
  auto agg = aggregate(g, CommunityState::from_assignment(g, p));
  ASSERT_EQ(agg.graph.node_count(), 2u);
  EXPECT_DOUBLE_EQ(agg.graph.loop_weight(0), 6.0);
  EXPECT_DOUBLE_EQ(agg.graph.loop_weight(1), 6.0);
  ASSERT_EQ(agg.graph.neighbors(0).size(), 1u);
  EXPECT_EQ(agg.graph.neighbors(0)[0], (Edge{1, 1.0}));
  EXPECT_DOUBLE_EQ(agg.graph.total_weight(), g.total_weight());
}

TEST(Aggregate, ConservesWeightAndModularity) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = testing::random_graph(12, 0.3, rng);
    if (g.total_weight() == 0.0) continue;
    auto p = random_partition(g.node_count(), rng);
    auto agg = aggregate(g, CommunityState::from_assignment(g, p));
    EXPECT_NEAR(agg.graph.total_weight(), g.total_weight(), 1e-12 * g.total_weight());
    // Every coarse node in its own community has the same modularity as the fine partition.
    EXPECT_NEAR(modularity(agg.graph, CommunityState::singletons(agg.graph)), brute_modularity(g, p), 1e-12);
  }
}

TEST(Louvain, SingleEdge) {
  auto g = parse_edge_list("0 1\n");
  auto d = louvain(g);
  ASSERT_EQ(d.levels.size(), 1u);
  EXPECT_EQ(d.levels[0].community_count, 1u);
  EXPECT_NEAR(d.final_modularity(), 0.0, 1e-15);
}

TEST(Louvain, RingOfCliquesRecoveredAtLevelOne) {
  auto g = testing::ring_of_cliques(5, 5);
  auto d = louvain(g);
  ASSERT_GE(d.levels.size(), 1u);
  std::vector<std::size_t> planted(25);
  for (std::size_t i = 0; i < 25; ++i) planted[i] = i / 5;
  EXPECT_TRUE(testing::same_partition(d.assignment(0), planted));
  EXPECT_EQ(d.levels[0].community_count, 5u);
  EXPECT_LE(d.levels[0].sweeps, 12u);
}

TEST(Louvain, StrictlyIncreasingAndProjectionConsistent) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = testing::random_graph(40, 0.08, rng);
    if (g.total_weight() == 0.0) continue;
    auto d = louvain(g);
    for (std::size_t l = 0; l < d.levels.size(); ++l) {
      if (l > 0) {
        EXPECT_GT(d.levels[l].modularity, d.levels[l - 1].modularity);
      }
      EXPECT_LE(d.levels[l].sweeps, 12u);
      EXPECT_NEAR(brute_modularity(g, d.assignment(l)), d.levels[l].modularity, 1e-9);
    }
    EXPECT_NEAR(brute_modularity(g, d.final_assignment()), d.final_modularity(), 1e-9);
  }
}

TEST(Louvain, LargeMinGainStopsAfterFirstLevel) {
  auto g = testing::ring_of_cliques(8, 3);
  LouvainOptions opts;
  opts.min_gain = 0.5;
  auto d = louvain(g, opts);
  EXPECT_EQ(d.levels.size(), 1u);
}

TEST(Louvain, TextExport) {
  auto g = parse_edge_list("0 1\n");
  auto d = louvain(g);
  EXPECT_EQ(dendrogram_text(d), "level 1: 0 0 1 0\n");
  auto j = dendrogram_metrics(d);
  EXPECT_EQ(j["levels"].size(), 1u);
  EXPECT_EQ(j["levels"][0]["communities"], 1);
}

}  // namespace
}  // namespace qlouvain
