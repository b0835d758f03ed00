#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qlouvain/error.hpp"
#include "qlouvain/graph.hpp"
#include "qlouvain/graph_io.hpp"

namespace qlouvain::jet {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Wraps an azimuth into [0, 2pi).
inline double wrap_phi(double phi) {
  double out = std::fmod(phi, kTwoPi);
  if (out < 0.0) out += kTwoPi;
  if (out >= kTwoPi) out = 0.0;
  return out;
}

struct Particle {
  double pt = 0.0;
  double y = 0.0;
  double phi = 0.0;

  static Particle make(double pt, double y, double phi) {
    if (!(pt >= 0.0) || !std::isfinite(pt)) throw DomainError("transverse momentum must be finite and >= 0");
    if (!std::isfinite(y) || !std::isfinite(phi)) throw DomainError("rapidity and azimuth must be finite");
    return {pt, y, wrap_phi(phi)};
  }

  bool operator==(const Particle&) const = default;
};

/// Massless-constituent four-momentum used for E-scheme recombination.
struct FourMomentum {
  double px = 0.0, py = 0.0, pz = 0.0, e = 0.0;

  static FourMomentum from(const Particle& p) {
    return {p.pt * std::cos(p.phi), p.pt * std::sin(p.phi), p.pt * std::sinh(p.y), p.pt * std::cosh(p.y)};
  }

  FourMomentum operator+(const FourMomentum& o) const { return {px + o.px, py + o.py, pz + o.pz, e + o.e}; }

  Particle particle() const {
    const double pt = std::hypot(px, py);
    const double y = (e > std::abs(pz)) ? 0.5 * std::log((e + pz) / (e - pz)) : 0.0;
    const double phi = (pt > 0.0) ? wrap_phi(std::atan2(py, px)) : 0.0;
    return {pt, y, phi};
  }
};

/// Minimal signed azimuthal separation, in (-pi, pi].
inline double delta_phi(double a, double b) {
  double d = std::fmod(a - b, kTwoPi);
  if (d > std::numbers::pi) d -= kTwoPi;
  else if (d <= -std::numbers::pi) d += kTwoPi;
  return d;
}

/// (y_a - y_b)^2 + dphi^2 with wrapped azimuth.
inline double delta_r2(const Particle& a, const Particle& b) {
  const double dy = a.y - b.y;
  const double dphi = delta_phi(a.phi, b.phi);
  return dy * dy + dphi * dphi;
}

struct KtOptions {
  /// -1 anti-kt, 0 Cambridge/Aachen-like, 1 kt.
  int p = 1;
  /// Optional R; when set the pair distance is divided by R^2.
  std::optional<double> radius;
};

inline void check_exponent(int p) {
  if (p < -1 || p > 1) throw DomainError("kt exponent p must be -1, 0 or 1, got " + std::to_string(p));
}

/// pt^(2p). Zero pt with p = -1 is rejected.
inline double momentum_factor(double pt, int p) {
  check_exponent(p);
  if (p == 0) return 1.0;
  if (p == 1) return pt * pt;
  if (!(pt > 0.0)) throw DomainError("anti-kt distance undefined for zero transverse momentum");
  return 1.0 / (pt * pt);
}

inline double kt_distance(const Particle& a, const Particle& b, const KtOptions& opts) {
  const double f = std::min(momentum_factor(a.pt, opts.p), momentum_factor(b.pt, opts.p));
  double d = f * delta_r2(a, b);
  if (opts.radius) d /= (*opts.radius) * (*opts.radius);
  return d;
}

inline double kt_distance(const Particle& a, const Particle& b, int p) { return kt_distance(a, b, KtOptions{p, {}}); }

inline double beam_distance(const Particle& a, int p) { return momentum_factor(a.pt, p); }

struct Jet {
  Particle momentum;
  /// Sorted indices of the input particles.
  std::vector<std::size_t> constituents;
};

/// One recombination step. Pseudojet indices: inputs are 0..n-1, the k-th
/// merge creates pseudojet n + k.
struct ClusterEvent {
  enum class Kind { kMerge, kBeam };
  Kind kind;
  std::size_t i;
  std::size_t j;  // merge partner (kMerge only), i < j
  double distance;
  std::size_t result;  // new pseudojet (kMerge) or emitted pseudojet (kBeam)

  bool same_step(const ClusterEvent& o) const {
    return kind == o.kind && i == o.i && (kind == Kind::kBeam || j == o.j) && result == o.result;
  }
};

struct ClusterSequence {
  std::vector<ClusterEvent> events;
  std::vector<Jet> jets;
};

/// Inclusive sequential recombination with nearest-neighbour caching.
///
/// At every step the smallest of all live d_ij and d_iB is taken: a pair is
/// recombined (E-scheme), a beam distance emits the pseudojet as a final jet.
/// Ties resolve to the lowest live pseudojet index, beam before pair, then the
/// lowest partner index.
inline ClusterSequence sequential_cluster(std::span<const Particle> particles, const KtOptions& opts) {
  if (particles.empty()) throw DomainError("cannot cluster an empty event");
  check_exponent(opts.p);
  const std::size_t n = particles.size();
  constexpr auto kNone = std::numeric_limits<std::size_t>::max();
  constexpr double kInf = std::numeric_limits<double>::infinity();

  struct Pseudo {
    FourMomentum p4;
    Particle kin;
    double beam;
    std::vector<std::size_t> members;
    std::size_t nn = kNone;
    double nn_dist = kInf;
  };
  std::vector<Pseudo> jets;
  jets.reserve(2 * n);
  std::vector<std::size_t> live;
  live.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = particles[i];
    jets.push_back({FourMomentum::from(p), p, beam_distance(p, opts.p), {i}});
    live.push_back(i);
  }

  auto pair = [&](std::size_t a, std::size_t b) { return kt_distance(jets[a].kin, jets[b].kin, opts); };
  auto refresh = [&](std::size_t a) {
    jets[a].nn = kNone;
    jets[a].nn_dist = kInf;
    for (auto b : live) {
      if (b == a) continue;
      const double d = pair(a, b);
      if (d < jets[a].nn_dist || (d == jets[a].nn_dist && b < jets[a].nn)) {
        jets[a].nn_dist = d;
        jets[a].nn = b;
      }
    }
  };
  for (auto a : live) refresh(a);

  ClusterSequence seq;
  while (!live.empty()) {
    // live is kept sorted, so the first strict minimum is the lowest index.
    std::size_t best = kNone;
    double best_d = kInf;
    bool beam = false;
    for (auto a : live) {
      if (jets[a].beam < best_d) {
        best_d = jets[a].beam;
        best = a;
        beam = true;
      }
      if (jets[a].nn != kNone && jets[a].nn_dist < best_d) {
        best_d = jets[a].nn_dist;
        best = a;
        beam = false;
      }
    }
    if (beam) {
      seq.events.push_back({ClusterEvent::Kind::kBeam, best, best, best_d, best});
      auto members = jets[best].members;
      std::sort(members.begin(), members.end());
      seq.jets.push_back({jets[best].kin, std::move(members)});
      live.erase(std::find(live.begin(), live.end(), best));
      for (auto a : live) {
        if (jets[a].nn == best) refresh(a);
      }
      continue;
    }
    const std::size_t a = std::min(best, jets[best].nn);
    const std::size_t b = std::max(best, jets[best].nn);
    const std::size_t k = jets.size();
    Pseudo merged;
    merged.p4 = jets[a].p4 + jets[b].p4;
    merged.kin = merged.p4.particle();
    merged.beam = beam_distance(merged.kin, opts.p);
    merged.members = jets[a].members;
    merged.members.insert(merged.members.end(), jets[b].members.begin(), jets[b].members.end());
    jets.push_back(std::move(merged));
    seq.events.push_back({ClusterEvent::Kind::kMerge, a, b, best_d, k});
    live.erase(std::find(live.begin(), live.end(), a));
    live.erase(std::find(live.begin(), live.end(), b));
    live.push_back(k);  // k exceeds every live index, order preserved
    for (auto c : live) {
      if (c == k) continue;
      if (jets[c].nn == a || jets[c].nn == b) {
        refresh(c);
      } else {
        const double d = pair(c, k);
        if (d < jets[c].nn_dist) {
          jets[c].nn_dist = d;
          jets[c].nn = k;
        }
      }
    }
    refresh(k);
  }
  return seq;
}

inline ClusterSequence sequential_cluster(std::span<const Particle> particles, int p) {
  return sequential_cluster(particles, KtOptions{p, {}});
}

/// Graph over particles: each particle whose smallest distance is a pair
/// distance links to its nearest and second-nearest partner (weight d_ij).
/// Particles whose smallest distance is the beam stay isolated and are not
/// offered as partners to others.
inline Graph build_particle_graph(std::span<const Particle> particles, const KtOptions& opts) {
  const std::size_t n = particles.size();
  std::vector<bool> beam_nearest(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) nearest = std::min(nearest, kt_distance(particles[i], particles[j], opts));
    }
    beam_nearest[i] = beam_distance(particles[i], opts.p) <= nearest;
  }
  GraphBuilder b(n);
  std::set<std::pair<std::size_t, std::size_t>> linked;
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < n; ++i) {
    if (beam_nearest[i]) continue;
    ranked.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && !beam_nearest[j]) ranked.emplace_back(kt_distance(particles[i], particles[j], opts), j);
    }
    const std::size_t take = std::min<std::size_t>(2, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end());
    for (std::size_t k = 0; k < take; ++k) {
      const auto j = ranked[k].second;
      if (linked.insert({std::min(i, j), std::max(i, j)}).second) b.add_edge(i, j, ranked[k].first);
    }
  }
  return b.build();
}

inline Graph build_particle_graph(std::span<const Particle> particles, int p) {
  return build_particle_graph(particles, KtOptions{p, {}});
}

struct HierarchicalResult {
  /// mappings[l][i] = coarse node of level-l node i; level 0 nodes are the input particles.
  std::vector<std::vector<std::size_t>> levels;
  /// Pseudojets remaining when no node has a partner; ordered by first constituent.
  std::vector<Jet> jets;
};

/// Louvain-style hierarchical clustering on the particle graph.
///
/// Each level builds the nearest/second-nearest graph over the current
/// pseudojets, sweeps nodes in index order moving each into the community of
/// its closest graph neighbour (smallest d_ij, lowest index on ties), then
/// recombines every community into one pseudojet. Stops once the graph has no
/// edges, i.e. every pseudojet is nearest to the beam or has no partner left.
inline HierarchicalResult hierarchical_kt(std::span<const Particle> particles, const KtOptions& opts) {
  if (particles.empty()) throw DomainError("cannot cluster an empty event");
  check_exponent(opts.p);
  std::vector<FourMomentum> p4;
  std::vector<Particle> kin(particles.begin(), particles.end());
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    p4.push_back(FourMomentum::from(particles[i]));
    members.push_back({i});
  }
  HierarchicalResult out;
  while (true) {
    const auto g = build_particle_graph(kin, opts);
    if (g.edge_count() == 0) break;
    const std::size_t n = g.node_count();
    std::vector<std::size_t> community(n);
    std::iota(community.begin(), community.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
      const auto nbrs = g.neighbors(i);
      if (nbrs.empty()) continue;
      const Edge* best = &nbrs[0];
      for (const auto& e : nbrs) {
        if (e.weight < best->weight || (e.weight == best->weight && e.to < best->to)) best = &e;
      }
      community[i] = community[best->to];
    }
    // Renumber by first appearance and recombine.
    constexpr auto kUnset = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> renumber(n, kUnset), mapping(n);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto& r = renumber[community[i]];
      if (r == kUnset) r = next++;
      mapping[i] = r;
    }
    std::vector<FourMomentum> coarse_p4(next);
    std::vector<std::vector<std::size_t>> coarse_members(next);
    for (std::size_t i = 0; i < n; ++i) {
      coarse_p4[mapping[i]] = coarse_p4[mapping[i]] + p4[i];
      auto& m = coarse_members[mapping[i]];
      m.insert(m.end(), members[i].begin(), members[i].end());
    }
    out.levels.push_back(std::move(mapping));
    p4 = std::move(coarse_p4);
    members = std::move(coarse_members);
    kin.clear();
    for (const auto& q : p4) kin.push_back(q.particle());
  }
  for (std::size_t i = 0; i < kin.size(); ++i) {
    auto m = members[i];
    std::sort(m.begin(), m.end());
    out.jets.push_back({kin[i], std::move(m)});
  }
  std::sort(out.jets.begin(), out.jets.end(),
            [](const Jet& a, const Jet& b) { return a.constituents.front() < b.constituents.front(); });
  return out;
}

inline HierarchicalResult hierarchical_kt(std::span<const Particle> particles, int p) {
  return hierarchical_kt(particles, KtOptions{p, {}});
}

/// Sorted list of constituent sets, for comparing jet partitions.
inline std::vector<std::vector<std::size_t>> partition_of(std::span<const Jet> jets) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& j : jets) out.push_back(j.constituents);
  std::sort(out.begin(), out.end());
  return out;
}

/// Reads "pt y phi" lines; '#' starts a comment line.
inline std::vector<Particle> parse_particles(std::string_view text) {
  std::vector<Particle> out;
  detail::LineReader reader(text);
  std::string_view line;
  while (reader.next(line)) {
    if (detail::blank_or_comment(line, "#%")) continue;
    const auto tok = detail::split_ws(line);
    if (tok.size() != 3) throw ParseError("expected 'pt y phi'", reader.line_number());
    const double pt = detail::parse_real(tok[0], reader.line_number());
    const double y = detail::parse_real(tok[1], reader.line_number());
    const double phi = detail::parse_real(tok[2], reader.line_number());
    if (pt < 0.0) throw DomainError("line " + std::to_string(reader.line_number()) + ": negative pt");
    out.push_back(Particle::make(pt, y, phi));
  }
  return out;
}

inline nlohmann::json to_json(const Particle& p) { return {{"pt", p.pt}, {"y", p.y}, {"phi", p.phi}}; }

inline nlohmann::json to_json(std::span<const Jet> jets) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& j : jets) out.push_back({{"momentum", to_json(j.momentum)}, {"constituents", j.constituents}});
  return out;
}

inline nlohmann::json to_json(const ClusterSequence& seq) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : seq.events) {
    if (e.kind == ClusterEvent::Kind::kMerge) {
      events.push_back({{"type", "merge"}, {"i", e.i}, {"j", e.j}, {"distance", e.distance}, {"result", e.result}});
    } else {
      events.push_back({{"type", "beam"}, {"i", e.i}, {"distance", e.distance}});
    }
  }
  return {{"events", events}, {"jets", to_json(std::span<const Jet>(seq.jets))}};
}

}  // namespace qlouvain::jet
