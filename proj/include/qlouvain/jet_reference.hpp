#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "qlouvain/jet.hpp"

namespace qlouvain::jet {

/// Naive sequential recombination: rebuilds the full distance table at every
/// step. O(n^3); meant as a cross-check for sequential_cluster.
inline ClusterSequence reference_cluster(std::span<const Particle> particles, const KtOptions& opts) {
  if (particles.empty()) throw DomainError("cannot cluster an empty event");
  check_exponent(opts.p);
  struct Item {
    std::size_t index;
    FourMomentum p4;
    Particle kin;
    std::vector<std::size_t> members;
  };
  std::vector<Item> live;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    live.push_back({i, FourMomentum::from(particles[i]), particles[i], {i}});
  }
  std::size_t next = particles.size();
  ClusterSequence seq;
  while (!live.empty()) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    bool beam = false;
    for (std::size_t a = 0; a < live.size(); ++a) {
      const double db = beam_distance(live[a].kin, opts.p);
      if (db < best) {
        best = db;
        bi = a;
        beam = true;
      }
      for (std::size_t b = 0; b < live.size(); ++b) {
        if (b == a) continue;
        const double d = kt_distance(live[a].kin, live[b].kin, opts);
        if (d < best) {
          best = d;
          bi = a;
          bj = b;
          beam = false;
        }
      }
    }
    if (beam) {
      auto item = std::move(live[bi]);
      live.erase(live.begin() + static_cast<std::ptrdiff_t>(bi));
      std::sort(item.members.begin(), item.members.end());
      seq.events.push_back({ClusterEvent::Kind::kBeam, item.index, item.index, best, item.index});
      seq.jets.push_back({item.kin, std::move(item.members)});
      continue;
    }
    if (live[bi].index > live[bj].index) std::swap(bi, bj);
    Item merged{next++, live[bi].p4 + live[bj].p4, {}, live[bi].members};
    merged.kin = merged.p4.particle();
    merged.members.insert(merged.members.end(), live[bj].members.begin(), live[bj].members.end());
    seq.events.push_back({ClusterEvent::Kind::kMerge, live[bi].index, live[bj].index, best, merged.index});
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(std::max(bi, bj)));
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(std::min(bi, bj)));
    live.push_back(std::move(merged));
  }
  return seq;
}

inline ClusterSequence reference_cluster(std::span<const Particle> particles, int p) {
  return reference_cluster(particles, KtOptions{p, {}});
}

/// True when both sequences have the same events (kind, indices, distance) and jets.
inline bool same_sequence(const ClusterSequence& a, const ClusterSequence& b, double tol = 1e-12) {
  if (a.events.size() != b.events.size() || a.jets.size() != b.jets.size()) return false;
  for (std::size_t k = 0; k < a.events.size(); ++k) {
    const auto& x = a.events[k];
    const auto& y = b.events[k];
    if (!x.same_step(y)) return false;
    if (std::abs(x.distance - y.distance) > tol * std::max(1.0, std::abs(x.distance))) return false;
  }
  for (std::size_t k = 0; k < a.jets.size(); ++k) {
    if (a.jets[k].constituents != b.jets[k].constituents) return false;
  }
  return true;
}

}  // namespace qlouvain::jet
