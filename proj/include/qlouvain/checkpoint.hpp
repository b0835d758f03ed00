#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qlouvain/error.hpp"
#include "qlouvain/file_io.hpp"
#include "qlouvain/mlp.hpp"

namespace qlouvain::nn {

inline constexpr const char* kCheckpointFormat = "qlouvain-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Mlp model;
  AdamState adam;
  /// Free-form metadata stored next to the network (agent config, training info).
  nlohmann::json meta = nlohmann::json::object();
};

namespace detail {

inline nlohmann::json values_json(std::span<const double> v) { return nlohmann::json(std::vector<double>(v.begin(), v.end())); }

inline void fill(std::span<double> dst, const nlohmann::json& src, const std::string& what) {
  if (!src.is_array() || src.size() != dst.size()) {
    throw SchemaError(what + ": expected " + std::to_string(dst.size()) + " values");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!src[i].is_number()) throw SchemaError(what + ": non-numeric value");
    dst[i] = src[i].get<double>();
  }
}

inline nlohmann::json grads_json(const Gradients& g) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& d : g) out.push_back({{"weight", values_json(flat(d.weight))}, {"bias", values_json(flat(d.bias))}});
  return out;
}

template <typename T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(std::string("checkpoint is missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Serializes architecture, weights, Adam moments and the dropout engine state.
/// Doubles are written in shortest round-trip form, so loading is bit exact.
inline nlohmann::json checkpoint_json(const Mlp& model, const AdamState& adam, const nlohmann::json& meta = {}) {
  nlohmann::json layers = nlohmann::json::array();
  nlohmann::json params = nlohmann::json::array();
  for (const auto& l : model.layers()) {
    nlohmann::json entry{{"type", layer_name(l)}};
    if (const auto* d = std::get_if<Dense>(&l)) {
      entry["in"] = d->in();
      entry["out"] = d->out();
      params.push_back({{"weight", detail::values_json(detail::flat(d->weight))},
                        {"bias", detail::values_json(detail::flat(d->bias))}});
    } else if (const auto* dr = std::get_if<Dropout>(&l)) {
      entry["rate"] = dr->rate;
    }
    layers.push_back(entry);
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"input_shape", model.input_shape()},
          {"layers", layers},
          {"params", params},
          {"seed", model.seed()},
          {"rng_state", model.rng_state()},
          {"adam",
           {{"learning_rate", adam.config.learning_rate},
            {"beta1", adam.config.beta1},
            {"beta2", adam.config.beta2},
            {"epsilon", adam.config.epsilon},
            {"step", adam.step},
            {"m", detail::grads_json(adam.m)},
            {"v", detail::grads_json(adam.v)}}},
          {"meta", meta.is_null() ? nlohmann::json::object() : meta}};
}

namespace detail {

inline Checkpoint parse_checkpoint(const nlohmann::json& j) {
  if (required<std::string>(j, "format") != kCheckpointFormat) throw SchemaError("not a qlouvain checkpoint");
  const int version = detail::required<int>(j, "version");
  if (version != kCheckpointVersion) throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  const auto input_shape = detail::required<Shape>(j, "input_shape");
  const auto seed = detail::required<std::uint64_t>(j, "seed");
  const auto& layers_json = j.at("layers");
  if (!layers_json.is_array()) throw SchemaError("checkpoint 'layers' must be an array");
  std::vector<Layer> layers;
  for (const auto& lj : layers_json) {
    const auto type = detail::required<std::string>(lj, "type");
    if (type == "dense") {
      layers.emplace_back(Dense(detail::required<std::size_t>(lj, "in"), detail::required<std::size_t>(lj, "out")));
    } else if (type == "relu") {
      layers.emplace_back(Relu{});
    } else if (type == "dropout") {
      layers.emplace_back(Dropout{detail::required<double>(lj, "rate")});
    } else if (type == "flatten") {
      layers.emplace_back(Flatten{});
    } else {
      throw SchemaError("unknown layer type '" + type + "'");
    }
  }
  Checkpoint cp;
  try {
    cp.model = Mlp(input_shape, std::move(layers), seed);
  } catch (const ShapeError& e) {
    throw SchemaError(std::string("inconsistent architecture: ") + e.what());
  }
  const auto params = j.contains("params") ? j.at("params") : nlohmann::json();
  if (!params.is_array() || params.size() != cp.model.dense_count()) {
    throw SchemaError("checkpoint 'params' does not match the dense layers");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& d = cp.model.dense(k);
    detail::fill(detail::flat(d.weight), params[k].value("weight", nlohmann::json()), "dense " + std::to_string(k) + " weight");
    detail::fill(detail::flat(d.bias), params[k].value("bias", nlohmann::json()), "dense " + std::to_string(k) + " bias");
  }
  cp.model.set_rng_state(detail::required<std::string>(j, "rng_state"));

  if (!j.contains("adam")) throw SchemaError("checkpoint is missing 'adam'");
  const auto& aj = j.at("adam");
  AdamConfig cfg{detail::required<double>(aj, "learning_rate"), detail::required<double>(aj, "beta1"),
                 detail::required<double>(aj, "beta2"), detail::required<double>(aj, "epsilon")};
  cp.adam = make_adam(cp.model, cfg);
  cp.adam.step = detail::required<std::uint64_t>(aj, "step");
  for (const char* key : {"m", "v"}) {
    const auto& mj = aj.contains(key) ? aj.at(key) : nlohmann::json();
    auto& target = std::string(key) == "m" ? cp.adam.m : cp.adam.v;
    if (!mj.is_array() || mj.size() != target.size()) throw SchemaError(std::string("adam '") + key + "' mismatch");
    for (std::size_t k = 0; k < target.size(); ++k) {
      detail::fill(detail::flat(target[k].weight), mj[k].value("weight", nlohmann::json()), std::string("adam ") + key);
      detail::fill(detail::flat(target[k].bias), mj[k].value("bias", nlohmann::json()), std::string("adam ") + key);
    }
  }
  cp.meta = j.value("meta", nlohmann::json::object());
  return cp;
}

}  // namespace detail

/// Rebuilds a checkpoint; any structural problem is reported as SchemaError.
inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    return detail::parse_checkpoint(j);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed checkpoint: ") + e.what());
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("checkpoint is not valid JSON: " + std::string(e.what()));
  }
  return checkpoint_from_json(j);
}

}  // namespace qlouvain::nn
