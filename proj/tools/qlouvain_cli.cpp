#include <CLI11.hpp>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "qlouvain/checkpoint.hpp"
#include "qlouvain/dql.hpp"
#include "qlouvain/file_io.hpp"
#include "qlouvain/graph_io.hpp"
#include "qlouvain/jet.hpp"
#include "qlouvain/jet_reference.hpp"
#include "qlouvain/louvain.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace qlouvain;

namespace {

enum Exit { kOk = 0, kUsage = 1, kInput = 2, kNumeric = 3 };

struct UsageError : Error {
  using Error::Error;
};

/// Input-side failure (unreadable, malformed or inconsistent files).
struct InputError : Error {
  using Error::Error;
};

struct Flags {
  std::optional<std::string> input, format, out_dir, config, checkpoint, method;
  std::optional<std::uint64_t> seed;
  std::optional<double> min_gain, gamma, learning_rate, dropout, epsilon_start, epsilon_min, epsilon_decay,
      reward_hit, reward_miss, radius;
  std::optional<std::size_t> epochs, node_limit, hidden, batch_size, replay_capacity, action_size, state_size,
      index_base;
  std::optional<int> p;
  bool no_normalize = false, normalize = false, timing = false, oracle = false, oracle_check = false;
};

/// Flag value, else config-file value, else fallback.
class Settings {
 public:
  Settings(const Flags& flags, json config) : flags_(flags), config_(std::move(config)) {}

  template <typename T>
  T get(const std::optional<T>& flag, const char* key, T fallback) const {
    if (flag) return *flag;
    if (config_.contains(key)) {
      try {
        return config_.at(key).get<T>();
      } catch (const json::exception&) {
        throw UsageError(std::string("config key '") + key + "' has the wrong type");
      }
    }
    return fallback;
  }

  bool flag(bool set, const char* key) const {
    if (set) return true;
    if (!config_.contains(key)) return false;
    if (!config_.at(key).is_boolean()) throw UsageError(std::string("config key '") + key + "' must be a boolean");
    return config_.at(key).get<bool>();
  }

  std::uint64_t seed() const {
    if (flags_.seed) return *flags_.seed;
    if (config_.contains("seed")) return get<std::uint64_t>(std::nullopt, "seed", 0);
    if (const char* env = std::getenv("QLOUVAIN_SEED")) {
      try {
        return std::stoull(env);
      } catch (const std::exception&) {
        throw UsageError("QLOUVAIN_SEED is not an unsigned integer");
      }
    }
    return 1;
  }

  std::string input() const {
    auto path = get<std::string>(flags_.input, "input", "");
    if (path.empty()) throw UsageError("--input is required");
    return path;
  }

  fs::path out_dir() const { return get<std::string>(flags_.out_dir, "out_dir", "."); }

  dql::AgentConfig agent(dql::AgentConfig c = {}) const {
    const auto& f = flags_;
    c.gamma = get(f.gamma, "gamma", c.gamma);
    c.learning_rate = get(f.learning_rate, "learning_rate", c.learning_rate);
    c.dropout = get(f.dropout, "dropout", c.dropout);
    c.epsilon_start = get(f.epsilon_start, "epsilon_start", c.epsilon_start);
    c.epsilon_min = get(f.epsilon_min, "epsilon_min", c.epsilon_min);
    c.epsilon_decay = get(f.epsilon_decay, "epsilon_decay", c.epsilon_decay);
    c.reward_hit = get(f.reward_hit, "reward_hit", c.reward_hit);
    c.reward_miss = get(f.reward_miss, "reward_miss", c.reward_miss);
    c.epochs = get(f.epochs, "epochs", c.epochs);
    c.hidden = get(f.hidden, "hidden", c.hidden);
    c.batch_size = get(f.batch_size, "batch_size", c.batch_size);
    c.replay_capacity = get(f.replay_capacity, "replay_capacity", c.replay_capacity);
    c.action_size = get(f.action_size, "action_size", c.action_size);
    c.state_size = get(f.state_size, "state_size", c.state_size);
    try {
      c.validate();
    } catch (const DomainError& e) {
      throw UsageError(e.what());
    }
    if (c.epochs == 0) throw UsageError("epochs must be at least 1");
    return c;
  }

  const Flags& flags() const { return flags_; }

 private:
  const Flags& flags_;
  json config_;
};

json load_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  std::string text;
  try {
    text = read_text_file(*path);
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw UsageError("config " + *path + " is not a JSON object");
  return j;
}

std::string format_of(const Settings& s, const std::string& path) {
  auto fmt = s.get<std::string>(s.flags().format, "format", "");
  if (!fmt.empty()) return fmt;
  auto name = path;
  if (name.size() > 3 && name.ends_with(".gz")) name.resize(name.size() - 3);
  if (name.ends_with(".mtx")) return "mtx";
  return "edgelist";
}

Graph load_graph(const Settings& s) {
  const auto path = s.input();
  const auto fmt = format_of(s, path);
  try {
    if (fmt == "mtx") return load_matrix_market(path);
    if (fmt == "edgelist") {
      EdgeListOptions opts;
      opts.index_base = s.get<std::size_t>(s.flags().index_base, "index_base", 0);
      if (opts.index_base > 1) throw UsageError("--index-base must be 0 or 1");
      return load_edge_list(path, opts);
    }
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw InputError(path + ": " + e.what());
  }
  throw UsageError("format '" + fmt + "' is not a graph format (expected mtx or edgelist)");
}

Graph normalized(const Graph& g) {
  try {
    return normalize_weights(g);
  } catch (const DomainError& e) {
    throw InputError(e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

int cmd_ingest(const Settings& s) {
  const auto g = load_graph(s);
  std::size_t loops = 0;
  double max_degree = 0.0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    loops += g.loop_weight(i) > 0.0;
    max_degree = std::max(max_degree, g.degree(i));
  }
  json summary{{"nodes", g.node_count()},
               {"edges", g.edge_count()},
               {"loops", loops},
               {"total_weight", g.total_weight()},
               {"max_degree", max_degree}};
  OutputSet out(s.out_dir());
  out.add("graph.json", dump(summary));
  if (!s.flag(s.flags().no_normalize, "no_normalize") && g.total_weight() > 0.0) {
    out.add("normalized.mtx", to_matrix_market(normalized(g)));
  }
  out.commit();
  std::cout << "nodes: " << g.node_count() << "\nedges: " << g.edge_count() << "\ntotal weight: " << g.total_weight()
            << "\n";
  return kOk;
}

int cmd_cluster_louvain(const Settings& s) {
  auto g = load_graph(s);
  if (s.flag(s.flags().normalize, "normalize")) g = normalized(g);
  LouvainOptions opts;
  opts.min_gain = s.get(s.flags().min_gain, "min_gain", opts.min_gain);
  if (!(opts.min_gain >= 0.0)) throw UsageError("--min-gain must be nonnegative");
  if (g.total_weight() == 0.0) throw InputError("graph has no edge weight; modularity is undefined");
  const auto d = louvain(g, opts);
  OutputSet out(s.out_dir());
  out.add("dendrogram.txt", dendrogram_text(d));
  out.add("louvain.json", dump(dendrogram_metrics(d)));
  out.commit();
  std::cout << "levels: " << d.levels.size() << "\ncommunities: " << d.levels.back().community_count
            << "\nmodularity: " << dql::format_real(d.final_modularity()) << "\n";
  return kOk;
}

std::size_t clamp_node_limit(std::size_t limit, const Graph& g) {
  if (limit > g.node_count()) {
    std::cerr << "warning: node limit " << limit << " exceeds the graph's " << g.node_count()
              << " nodes; using " << g.node_count() << "\n";
    return g.node_count();
  }
  if (limit == 0) throw UsageError("--node-limit must be positive");
  return limit;
}

int cmd_train(const Settings& s) {
  auto g = load_graph(s);
  if (!s.flag(s.flags().no_normalize, "no_normalize")) g = normalized(g);
  const auto cfg = s.agent();
  const auto limit = clamp_node_limit(s.get<std::size_t>(s.flags().node_limit, "node_limit", 10000), g);
  const auto seed = s.seed();
  const auto result = dql::train(g, cfg, limit, seed);
  for (std::size_t k = 0; k < result.model.dense_count(); ++k) {
    const auto& d = result.model.dense(k);
    if (!d.weight.allFinite() || !d.bias.allFinite()) throw Error("training diverged: non-finite parameters");
  }
  json meta{{"agent", dql::to_json(cfg)}, {"node_limit", limit}, {"seed", seed}};
  OutputSet out(s.out_dir());
  out.add("checkpoint.json", nn::checkpoint_json(result.model, result.adam, meta).dump() + "\n");
  out.add("metrics.csv", dql::metrics_csv(result.metrics, s.flag(s.flags().timing, "timing")));
  out.commit();
  std::cout << "final hit rate: " << dql::format_real(result.metrics.back().hit_rate) << "\n";
  return kOk;
}

dql::AgentConfig config_from_meta(const json& meta) {
  dql::AgentConfig c;
  if (!meta.contains("agent")) return c;
  const auto& a = meta.at("agent");
  auto read = [&](const char* key, auto& field) {
    if (a.contains(key)) field = a.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    read("gamma", c.gamma);
    read("learning_rate", c.learning_rate);
    read("dropout", c.dropout);
    read("hidden", c.hidden);
    read("action_size", c.action_size);
    read("state_size", c.state_size);
    read("reward_hit", c.reward_hit);
    read("reward_miss", c.reward_miss);
  } catch (const json::exception&) {
    throw InputError("checkpoint metadata has a malformed agent section");
  }
  return c;
}

int cmd_eval(const Settings& s) {
  auto g = load_graph(s);
  if (!s.flag(s.flags().no_normalize, "no_normalize")) g = normalized(g);
  const bool oracle = s.flag(s.flags().oracle, "oracle");
  std::optional<nn::Checkpoint> cp;
  dql::AgentConfig base;
  if (!oracle) {
    const auto path = s.get<std::string>(s.flags().checkpoint, "checkpoint", "");
    if (path.empty()) throw UsageError("--checkpoint is required unless --oracle is given");
    try {
      cp = nn::load_checkpoint(path);
    } catch (const SchemaError& e) {
      throw InputError(std::string("schema error in checkpoint ") + path + ": " + e.what());
    } catch (const Error& e) {
      throw InputError(e.what());
    }
    base = config_from_meta(cp->meta);
  }
  const auto cfg = s.agent(base);
  dql::Policy policy;
  if (oracle) {
    policy = dql::oracle_policy();
  } else {
    const nn::Shape expected{cfg.state_size, cfg.action_size};
    if (cp->model.input_shape() != expected || cp->model.output_shape() != nn::Shape{cfg.action_size}) {
      throw InputError("checkpoint architecture mismatch: expected input " + nn::to_string(expected) + " and output " +
                       nn::to_string({cfg.action_size}) + ", found input " + nn::to_string(cp->model.input_shape()) +
                       " and output " + nn::to_string(cp->model.output_shape()));
    }
    policy = dql::greedy_policy(cp->model);
  }
  const auto precision = dql::evaluate_precision(policy, g, cfg);
  const auto agent = dql::cluster_with_agent(policy, g, cfg);
  const auto reference = dql::louvain_first_sweep(g);
  const double ratio = reference.modularity != 0.0 ? agent.modularity / reference.modularity : 0.0;
  json report{{"positives", precision.positives},
              {"negatives", precision.negatives},
              {"precision", precision.rate()},
              {"modularity_agent", agent.modularity},
              {"modularity_louvain", reference.modularity},
              {"ratio", ratio},
              {"policy", oracle ? "oracle" : "checkpoint"}};
  OutputSet out(s.out_dir());
  out.add("report.json", dump(report));
  out.commit();
  std::cout << "precision: " << dql::format_real(precision.rate()) << "\nmodularity ratio: " << dql::format_real(ratio)
            << "\n";
  return kOk;
}

int cmd_jet(const Settings& s) {
  jet::KtOptions opts;
  opts.p = s.get(s.flags().p, "p", 1);
  if (opts.p < -1 || opts.p > 1) throw UsageError("--p must be -1, 0 or 1");
  if (s.flags().radius || s.get<double>(std::nullopt, "radius", 0.0) > 0.0) {
    opts.radius = s.get(s.flags().radius, "radius", 0.0);
    if (!(*opts.radius > 0.0)) throw UsageError("--radius must be positive");
  }
  const auto method = s.get<std::string>(s.flags().method, "method", "both");
  if (method != "sequential" && method != "hierarchical" && method != "both") {
    throw UsageError("--method must be sequential, hierarchical or both");
  }
  const auto path = s.input();
  std::vector<jet::Particle> particles;
  try {
    particles = jet::parse_particles(read_text_file(path));
  } catch (const Error& e) {
    throw InputError(path + ": " + e.what());
  }
  if (particles.empty()) throw InputError(path + ": empty event");
  json report{{"p", opts.p}, {"particles", particles.size()}};
  std::optional<jet::ClusterSequence> seq;
  std::optional<jet::HierarchicalResult> hier;
  if (method != "hierarchical") {
    seq = jet::sequential_cluster(particles, opts);
    report["sequential"] = jet::to_json(*seq);
    std::cout << "merge order:";
    for (const auto& e : seq->events) {
      if (e.kind == jet::ClusterEvent::Kind::kMerge) std::cout << " (" << e.i << "," << e.j << ")";
    }
    std::cout << "\n";
  }
  if (method != "sequential") {
    hier = jet::hierarchical_kt(particles, opts);
    report["hierarchical"] = {{"levels", hier->levels}, {"jets", jet::to_json(std::span<const jet::Jet>(hier->jets))}};
  }
  if (seq && hier) {
    const bool same = jet::partition_of(seq->jets) == jet::partition_of(hier->jets);
    report["agreement"] = {{"sequential_jets", seq->jets.size()},
                           {"hierarchical_jets", hier->jets.size()},
                           {"same_partition", same}};
    std::cout << "jets: sequential " << seq->jets.size() << ", hierarchical " << hier->jets.size()
              << (same ? " (same partition)" : " (partitions differ)") << "\n";
  }
  if (s.flag(s.flags().oracle_check, "oracle_check")) {
    if (!seq) seq = jet::sequential_cluster(particles, opts);
    const bool match = jet::same_sequence(*seq, jet::reference_cluster(particles, opts));
    report["oracle_match"] = match;
    std::cout << (match ? "oracle: match" : "oracle: MISMATCH") << "\n";
  }
  OutputSet out(s.out_dir());
  out.add("jet.json", dump(report));
  out.commit();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Louvain community detection, deep Q-learning agent and kt jet clustering"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub, bool needs_input = true) {
    sub->add_option("--input,-i", f.input, needs_input ? "Input file" : "Input file (optional)");
    sub->add_option("--format", f.format, "Input format")->check(CLI::IsMember({"mtx", "edgelist", "particles"}));
    sub->add_option("--seed", f.seed, "Random seed (default: $QLOUVAIN_SEED, else 1)");
    sub->add_option("--out-dir,-o", f.out_dir, "Output directory");
    sub->add_option("--config", f.config, "JSON config file; flags take precedence");
    sub->add_option("--index-base", f.index_base, "Edge-list node index base (0 or 1)");
  };
  auto agent = [&](CLI::App* sub) {
    sub->add_option("--gamma", f.gamma, "Discount rate");
    sub->add_option("--learning-rate", f.learning_rate, "Adam learning rate");
    sub->add_option("--dropout", f.dropout, "Dropout rate");
    sub->add_option("--hidden", f.hidden, "Hidden layer width");
    sub->add_option("--batch-size", f.batch_size, "Replay batch size");
    sub->add_option("--replay-capacity", f.replay_capacity, "Replay memory capacity");
    sub->add_option("--action-size", f.action_size, "Neighbour slots (self included)");
    sub->add_option("--state-size", f.state_size, "Feature rows per state");
    sub->add_option("--epsilon-start", f.epsilon_start, "Initial exploration rate");
    sub->add_option("--epsilon-min", f.epsilon_min, "Exploration floor");
    sub->add_option("--epsilon-decay", f.epsilon_decay, "Per-episode exploration decay");
    sub->add_option("--reward-hit", f.reward_hit, "Reward for matching the oracle");
    sub->add_option("--reward-miss", f.reward_miss, "Reward for missing the oracle");
    sub->add_flag("--no-normalize", f.no_normalize, "Keep raw edge weights");
  };

  auto* ingest = app.add_subcommand("ingest", "Load a graph and write a summary");
  common(ingest);
  ingest->add_flag("--no-normalize", f.no_normalize, "Skip the normalized copy");

  auto* cluster = app.add_subcommand("cluster-louvain", "Run multi-level Louvain");
  common(cluster);
  cluster->add_option("--min-gain", f.min_gain, "Stop when a phase gains less than this");
  cluster->add_flag("--normalize", f.normalize, "Normalize weights first");

  auto* train = app.add_subcommand("train", "Train the Q-learning agent");
  common(train);
  agent(train);
  train->add_option("--epochs", f.epochs, "Training episodes");
  train->add_option("--node-limit", f.node_limit, "Nodes per episode (default 10000)");
  train->add_flag("--timing", f.timing, "Record wall time per epoch in metrics.csv");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint against the Louvain oracle");
  common(eval);
  agent(eval);
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint written by train");
  eval->add_flag("--oracle", f.oracle, "Use the oracle itself as the policy");

  auto* jet = app.add_subcommand("jet", "Cluster a particle event");
  common(jet);
  jet->add_option("--p", f.p, "Exponent: 1 kt, 0 Cambridge/Aachen, -1 anti-kt");
  jet->add_option("--method", f.method, "sequential, hierarchical or both");
  jet->add_option("--radius", f.radius, "Divide pair distances by radius^2");
  jet->add_flag("--oracle-check", f.oracle_check, "Compare against the full-recompute clustering");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    Settings s(f, load_config(f.config));
    if (ingest->parsed()) return cmd_ingest(s);
    if (cluster->parsed()) return cmd_cluster_louvain(s);
    if (train->parsed()) return cmd_train(s);
    if (eval->parsed()) return cmd_eval(s);
    return cmd_jet(s);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  }
}
