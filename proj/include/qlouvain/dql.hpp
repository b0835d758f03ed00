#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <numeric>
#include <span>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qlouvain/error.hpp"
#include "qlouvain/graph.hpp"
#include "qlouvain/louvain.hpp"
#include "qlouvain/mlp.hpp"
#include "qlouvain/tensor.hpp"

namespace qlouvain::dql {

/// Rows of the state matrix, one column per neighbor slot:
///   0  weight from the node into the slot's community
///   1  degree sum of the slot's community
///   2  degree of the node
///   3  loop weight of the node
///   4  2W
inline constexpr std::size_t kFeatureCount = 5;
inline constexpr double kDummyFeature = -1.0;

struct AgentConfig {
  double gamma = 0.001;
  double epsilon_start = 1.0;
  double epsilon_min = 0.01;
  double epsilon_decay = 0.995;
  double learning_rate = 0.001;
  double dropout = 0.5;
  std::size_t hidden = 128;
  std::size_t batch_size = 32;
  std::size_t replay_capacity = 100000;
  std::size_t action_size = 4;
  std::size_t state_size = kFeatureCount;
  double reward_hit = 10000.0;
  double reward_miss = -1000.0;
  std::size_t epochs = 70;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(gamma)) throw DomainError("gamma must lie in [0, 1]");
    if (!unit(epsilon_start) || !unit(epsilon_min) || !unit(epsilon_decay)) {
      throw DomainError("epsilon schedule values must lie in [0, 1]");
    }
    if (!(learning_rate > 0.0)) throw DomainError("learning rate must be positive");
    if (!(dropout >= 0.0) || dropout >= 1.0) throw DomainError("dropout must lie in [0, 1)");
    if (hidden == 0) throw DomainError("hidden width must be positive");
    if (batch_size == 0) throw DomainError("batch_size must be positive");
    if (replay_capacity < batch_size) throw DomainError("replay capacity must be at least batch_size");
    if (action_size < 2) throw DomainError("action_size must be at least 2");
    if (state_size != kFeatureCount) {
      throw DomainError("state_size must be " + std::to_string(kFeatureCount) + ", got " + std::to_string(state_size));
    }
    if (!std::isfinite(reward_hit) || !std::isfinite(reward_miss)) throw DomainError("rewards must be finite");
  }
};

inline nlohmann::json to_json(const AgentConfig& c) {
  return {{"gamma", c.gamma},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_min", c.epsilon_min},
          {"epsilon_decay", c.epsilon_decay},
          {"learning_rate", c.learning_rate},
          {"dropout", c.dropout},
          {"hidden", c.hidden},
          {"batch_size", c.batch_size},
          {"replay_capacity", c.replay_capacity},
          {"action_size", c.action_size},
          {"state_size", c.state_size},
          {"reward_hit", c.reward_hit},
          {"reward_miss", c.reward_miss},
          {"epochs", c.epochs}};
}

struct EnvState {
  std::size_t node = 0;
  nn::Tensor features;  // (state_size, action_size)
};

/// Feature matrix for one node: its slot neighborhood described through the
/// current communities. Dummy columns are all -1.
inline EnvState encode_state(const Graph& g, const CommunityState& cs, std::size_t node, const AgentConfig& cfg) {
  const auto slots = neighbor_slots(g, node, cfg.action_size);
  EnvState s{node, nn::Tensor({kFeatureCount, cfg.action_size}, kDummyFeature)};
  const double degree = g.degree(node);
  const double loop = g.loop_weight(node);
  const double two_w = 2.0 * g.total_weight();
  for (std::size_t j = 0; j < slots.slots.size(); ++j) {
    const auto& slot = slots.slots[j];
    if (slot.dummy()) continue;
    const auto c = cs.community(static_cast<std::size_t>(slot.node));
    s.features.at(0, j) = cs.weight_to(g, node, c);
    s.features.at(1, j) = cs.degree_sum(c);
    s.features.at(2, j) = degree;
    s.features.at(3, j) = loop;
    s.features.at(4, j) = two_w;
  }
  return s;
}

/// reward_hit when the chosen community is the oracle's, reward_miss otherwise
/// (including a dummy choice, passed as nullopt).
inline double reward(std::optional<CommunityId> chosen, CommunityId oracle, const AgentConfig& cfg) {
  return chosen && *chosen == oracle ? cfg.reward_hit : cfg.reward_miss;
}

/// Whose choice mutates the communities after a step.
enum class MoveSource { kOracle, kAgent };

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
  bool hit = false;
  CommunityId oracle = 0;
  std::optional<CommunityId> chosen;
};

/// Clustering environment: one episode is a sweep over nodes 0..node_limit-1
/// starting from singleton communities. The oracle answer for a node is the
/// best modularity-gain community among its slot communities.
class Environment {
 public:
  Environment(const Graph& g, AgentConfig cfg, std::size_t node_limit, MoveSource source = MoveSource::kOracle)
      : graph_(&g), cfg_(std::move(cfg)), node_limit_(node_limit), source_(source) {
    cfg_.validate();
    if (node_limit_ == 0) throw DomainError("node_limit must be positive");
    if (node_limit_ > g.node_count()) throw DomainError("node_limit exceeds the node count");
    reset();
  }

  const AgentConfig& config() const noexcept { return cfg_; }
  const CommunityState& communities() const noexcept { return cs_; }
  std::size_t current_node() const noexcept { return cursor_; }
  bool done() const noexcept { return cursor_ >= node_limit_; }

  const EnvState& reset() {
    cs_ = CommunityState::singletons(*graph_);
    cursor_ = 0;
    state_ = encode_state(*graph_, cs_, cursor_, cfg_);
    return state_;
  }

  const EnvState& state() const noexcept { return state_; }

  /// Community behind a slot of the current node; nullopt for dummies.
  std::optional<CommunityId> slot_community(std::size_t slot) const {
    const auto slots = neighbor_slots(*graph_, cursor_, cfg_.action_size);
    if (slot >= slots.slots.size()) throw DomainError("slot " + std::to_string(slot) + " out of range");
    if (slots.slots[slot].dummy()) return std::nullopt;
    return cs_.community(static_cast<std::size_t>(slots.slots[slot].node));
  }

  CommunityId oracle_community() const {
    const auto slots = neighbor_slots(*graph_, cursor_, cfg_.action_size);
    std::vector<CommunityId> candidates;
    for (std::size_t j = 1; j < slots.slots.size(); ++j) {
      if (slots.slots[j].dummy()) continue;
      const auto c = cs_.community(static_cast<std::size_t>(slots.slots[j].node));
      if (std::find(candidates.begin(), candidates.end(), c) == candidates.end()) candidates.push_back(c);
    }
    return best_community(*graph_, cs_, cursor_, candidates);
  }

  /// Lowest slot whose community is the oracle's.
  std::size_t oracle_slot() const {
    const auto target = oracle_community();
    for (std::size_t j = 0; j < cfg_.action_size; ++j) {
      if (slot_community(j) == target) return j;
    }
    return 0;
  }

  StepResult step(std::size_t action) {
    if (done()) throw StateError("step() called on a finished episode");
    if (action >= cfg_.action_size) {
      throw DomainError("action " + std::to_string(action) + " out of range for " + std::to_string(cfg_.action_size) +
                        " slots");
    }
    StepResult r;
    r.oracle = oracle_community();
    r.chosen = slot_community(action);
    r.hit = r.chosen && *r.chosen == r.oracle;
    r.reward = reward(r.chosen, r.oracle, cfg_);
    if (source_ == MoveSource::kOracle) {
      cs_.move(*graph_, cursor_, r.oracle);
    } else if (r.chosen) {
      cs_.move(*graph_, cursor_, *r.chosen);
    }
    const std::size_t node = cursor_;
    ++cursor_;
    r.done = done();
    state_ = encode_state(*graph_, cs_, r.done ? node : cursor_, cfg_);
    r.next = state_;
    return r;
  }

 private:
  const Graph* graph_;
  AgentConfig cfg_;
  std::size_t node_limit_;
  MoveSource source_;
  CommunityState cs_;
  std::size_t cursor_ = 0;
  EnvState state_;
};

/// Index of the largest value; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

/// Epsilon-greedy action: uniform random slot with probability epsilon,
/// otherwise the greedy slot of the model's inference output.
template <typename Rng>
std::size_t act(const nn::Mlp& model, const EnvState& state, double epsilon, Rng& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("epsilon must lie in [0, 1]");
  const std::size_t actions = state.features.shape().at(1);
  if (epsilon > 0.0) {
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) return std::uniform_int_distribution<std::size_t>(0, actions - 1)(rng);
  }
  const auto q = model.predict(state.features);
  return argmax(q.values());
}

struct Experience {
  EnvState state;
  std::size_t action = 0;
  double reward = 0.0;
  EnvState next_state;
  bool terminal = false;
};

/// Bounded ring buffer; once full the oldest experience is overwritten.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw DomainError("replay capacity must be positive");
    items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
  }

  std::size_t size() const noexcept { return items_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }

  void push(Experience e) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(e));
    } else {
      items_[head_] = std::move(e);
      head_ = (head_ + 1) % capacity_;
    }
  }

  /// i-th experience, oldest first.
  const Experience& at(std::size_t i) const { return items_.at((head_ + i) % items_.size()); }

  /// Uniform sample of distinct experiences, in storage order.
  template <typename Rng>
  std::vector<const Experience*> sample(std::size_t count, Rng& rng) const {
    if (count > items_.size()) throw StateError("replay memory holds fewer experiences than requested");
    std::vector<std::size_t> all(items_.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<std::size_t> picked;
    picked.reserve(count);
    std::sample(all.begin(), all.end(), std::back_inserter(picked), count, rng);
    std::vector<const Experience*> out;
    out.reserve(count);
    for (auto i : picked) out.push_back(&items_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Experience> items_;
};

/// Q-learning targets: the model's own prediction with the taken action's
/// entry replaced by r (terminal) or r + gamma * max_a Q(next).
inline nn::Tensor q_targets(const nn::Mlp& model, std::span<const Experience* const> batch, double gamma) {
  std::vector<nn::Tensor> states, nexts;
  for (const auto* e : batch) {
    states.push_back(e->state.features);
    nexts.push_back(e->next_state.features);
  }
  auto targets = model.predict(nn::stack(states));
  const auto next_q = model.predict(nn::stack(nexts));
  const std::size_t actions = targets.shape().at(1);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto* e = batch[b];
    double value = e->reward;
    if (!e->terminal) {
      double best = next_q.at(b, 0);
      for (std::size_t a = 1; a < actions; ++a) best = std::max(best, next_q.at(b, a));
      value += gamma * best;
    }
    targets.at(b, e->action) = value;
  }
  return targets;
}

/// One experience-replay update. Returns the batch loss before the update.
template <typename Rng>
double replay(nn::Mlp& model, const ReplayMemory& memory, nn::AdamState& adam, const AgentConfig& cfg, Rng& rng) {
  if (memory.size() < cfg.batch_size) throw StateError("replay memory smaller than the batch size");
  const auto batch = memory.sample(cfg.batch_size, rng);
  const auto targets = q_targets(model, batch, cfg.gamma);
  std::vector<nn::Tensor> states;
  states.reserve(batch.size());
  for (const auto* e : batch) states.push_back(e->state.features);
  return nn::train_on_batch(model, nn::stack(states), targets, adam);
}

/// Discounted return sum_k gamma^k r_k.
inline double compute_return(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in [0, 1]");
  double total = 0.0, discount = 1.0;
  for (double r : rewards) {
    total += discount * r;
    discount *= gamma;
  }
  return total;
}

struct EpochMetrics {
  std::size_t epoch = 0;
  /// Mean replay loss over the epoch; NaN when no replay happened.
  double loss = 0.0;
  double hit_rate = 0.0;
  double epsilon = 0.0;
  double wall_time_ms = 0.0;
};

struct StepRecord {
  std::size_t node;
  std::size_t action;
  double reward;

  bool operator==(const StepRecord&) const = default;
};

struct TrainOptions {
  bool record_steps = false;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  nn::Mlp model;
  nn::AdamState adam;
  std::vector<EpochMetrics> metrics;
  std::vector<StepRecord> steps;
  /// Communities at the end of the last episode.
  CommunityState final_communities;
};

inline nn::Mlp build_agent_network(const AgentConfig& cfg, std::uint64_t seed) {
  return nn::build_q_network(cfg.state_size, cfg.action_size, seed, {cfg.hidden, cfg.dropout});
}

/// Deep Q-learning on the first node_limit nodes. Each epoch is one
/// teacher-forced episode; every step acts, stores the transition and, once
/// the memory holds a batch, replays. Epsilon decays after each episode.
inline TrainResult train(const Graph& g, const AgentConfig& cfg, std::size_t node_limit, std::uint64_t seed,
                         const TrainOptions& opts = {}) {
  cfg.validate();
  if (node_limit == 0) throw DomainError("node_limit must be positive");
  TrainResult result;
  result.model = build_agent_network(cfg, seed);
  result.adam = nn::make_adam(result.model, {cfg.learning_rate});
  std::mt19937_64 rng(seed);
  ReplayMemory memory(cfg.replay_capacity);
  Environment env(g, cfg, node_limit);
  double epsilon = cfg.epsilon_start;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EnvState state = env.reset();
    std::size_t hits = 0, steps = 0, replays = 0;
    double loss_sum = 0.0;
    while (!env.done()) {
      const std::size_t action = act(result.model, state, epsilon, rng);
      auto r = env.step(action);
      if (opts.record_steps) result.steps.push_back({state.node, action, r.reward});
      hits += r.hit ? 1 : 0;
      ++steps;
      memory.push({std::move(state), action, r.reward, r.next, r.done});
      state = std::move(r.next);
      if (memory.size() >= cfg.batch_size) {
        loss_sum += replay(result.model, memory, result.adam, cfg, rng);
        ++replays;
      }
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = replays ? loss_sum / static_cast<double>(replays) : std::nan("");
    m.hit_rate = static_cast<double>(hits) / static_cast<double>(steps);
    m.epsilon = epsilon;
    m.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    result.metrics.push_back(m);
    if (opts.on_epoch) opts.on_epoch(m);
    epsilon = std::max(cfg.epsilon_min, epsilon * cfg.epsilon_decay);
  }
  result.final_communities = env.communities();
  return result;
}

/// Chooses a slot for the environment's current node.
using Policy = std::function<std::size_t(const Environment&)>;

inline Policy greedy_policy(const nn::Mlp& model) {
  return [&model](const Environment& env) { return argmax(model.predict(env.state().features).values()); };
}

/// The environment's own oracle acting as the agent.
inline Policy oracle_policy() {
  return [](const Environment& env) { return env.oracle_slot(); };
}

struct Precision {
  std::size_t positives = 0;
  std::size_t negatives = 0;

  double rate() const {
    const auto n = positives + negatives;
    return n ? static_cast<double>(positives) / static_cast<double>(n) : 0.0;
  }
};

/// Teacher-forced sweep over every node, counting how often the policy's slot
/// lands in the oracle's community.
inline Precision evaluate_precision(const Policy& policy, const Graph& g, const AgentConfig& cfg) {
  Environment env(g, cfg, g.node_count());
  Precision p;
  while (!env.done()) {
    const auto r = env.step(policy(env));
    (r.hit ? p.positives : p.negatives) += 1;
  }
  return p;
}

inline Precision evaluate_precision(const nn::Mlp& model, const Graph& g, const AgentConfig& cfg) {
  return evaluate_precision(greedy_policy(model), g, cfg);
}

struct Clustering {
  CommunityState communities;
  double modularity = 0.0;
};

/// One first-level sweep where the policy's choice is applied to every node.
inline Clustering cluster_with_agent(const Policy& policy, const Graph& g, const AgentConfig& cfg) {
  Environment env(g, cfg, g.node_count(), MoveSource::kAgent);
  while (!env.done()) env.step(policy(env));
  Clustering out{env.communities(), 0.0};
  out.modularity = modularity(g, out.communities);
  return out;
}

inline Clustering cluster_with_agent(const nn::Mlp& model, const Graph& g, const AgentConfig& cfg) {
  return cluster_with_agent(greedy_policy(model), g, cfg);
}

/// Single Louvain sweep from singletons (candidate_limit as in SweepOptions).
inline Clustering louvain_first_sweep(const Graph& g, std::size_t candidate_limit = 0) {
  auto cs = CommunityState::singletons(g);
  SweepOptions opts;
  opts.candidate_limit = candidate_limit;
  sweep(g, cs, opts);
  const double q = modularity(g, cs);
  return {std::move(cs), q};
}

inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream out;
  out << std::setprecision(10) << v;
  return out.str();
}

/// CSV with columns epoch,loss,hit_rate,epsilon,wall_time_ms. With
/// include_timing == false the time column is written as 0.
inline std::string metrics_csv(std::span<const EpochMetrics> metrics, bool include_timing = true) {
  std::ostringstream out;
  out << "epoch,loss,hit_rate,epsilon,wall_time_ms\n";
  for (const auto& m : metrics) {
    out << m.epoch << ',' << format_real(m.loss) << ',' << format_real(m.hit_rate) << ',' << format_real(m.epsilon)
        << ',' << (include_timing ? format_real(std::round(m.wall_time_ms * 1000.0) / 1000.0) : std::string("0"))
        << '\n';
  }
  return out.str();
}

}  // namespace qlouvain::dql
