#pragma once

// Run configuration: a single JSON document, optionally inheriting from a
// named preset through its "preset" field. Resolution order is built-in
// defaults, then the preset, then the file, then command-line overrides.
// Unknown fields are rejected so that typos fail before any work starts.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "graph.hpp"
#include "model.hpp"
#include "train.hpp"

namespace emograph {

inline nlohmann::json default_config() {
  return nlohmann::json::parse(R"({
    "paths": {"train": "", "val": "", "test": "", "labels": "", "graph": "",
              "aliases": "", "out": "out"},
    "graph": {"mu": 0.4, "w": 0.35, "use_val_for_graph": true},
    "encoder": {"kind": "meanpool", "embed_dim": 64, "hidden_dim": 64, "heads": 4,
                "depth": 2, "dropout": 0.0, "max_len": 64},
    "head": {"kind": "gcn", "label_embed_dim": 64, "gat_heads": 4, "leaky_slope": 0.2},
    "optim": {"lr_head": 0.001, "lr_encoder": 0.001, "batch_size": 32, "epochs": 100,
              "patience": 5, "clip_norm": 5.0},
    "vocab": {"min_freq": 2},
    "mode": {"kind": "multilabel", "keep": [], "aliases": {}},
    "threshold": 0.5,
    "min_support": 5,
    "seed": 1
  })");
}

/// Built-in presets. Graph and learning-rate values follow the published
/// training setup; encoder sizes are scaled down to desk scale.
inline const std::map<std::string, nlohmann::json>& builtin_presets() {
  static const std::map<std::string, nlohmann::json> presets = {
      {"semeval-gcn", nlohmann::json::parse(R"({
        "graph": {"mu": 0.4, "w": 0.35, "use_val_for_graph": true},
        "encoder": {"kind": "selfattn", "embed_dim": 64, "hidden_dim": 64, "heads": 4,
                    "depth": 2, "dropout": 0.3},
        "head": {"kind": "gcn"},
        "optim": {"lr_head": 0.0001, "lr_encoder": 0.001}
      })")},
      {"semeval-gat", nlohmann::json::parse(R"({
        "graph": {"mu": 0.5, "w": 0.35, "use_val_for_graph": true},
        "encoder": {"kind": "selfattn", "embed_dim": 64, "hidden_dim": 64, "heads": 4,
                    "depth": 2, "dropout": 0.3},
        "head": {"kind": "gat"},
        "optim": {"lr_head": 0.0001, "lr_encoder": 0.001}
      })")},
      {"twitter", nlohmann::json::parse(R"({
        "graph": {"mu": 0.1, "w": 0.35, "use_val_for_graph": false},
        "encoder": {"kind": "selfattn", "embed_dim": 64, "hidden_dim": 64, "heads": 4,
                    "depth": 2, "dropout": 0.3},
        "head": {"kind": "gcn"},
        "optim": {"lr_head": 0.001, "lr_encoder": 0.001}
      })")},
      {"iemocap-transfer", nlohmann::json::parse(R"({
        "graph": {"mu": 0.4, "w": 0.35, "use_val_for_graph": true},
        "encoder": {"kind": "meanpool", "embed_dim": 64, "hidden_dim": 64, "dropout": 0.3},
        "head": {"kind": "gcn"},
        "optim": {"lr_head": 0.0001, "lr_encoder": 0.001},
        "mode": {"kind": "singlelabel",
                 "keep": ["anger", "sadness", "happiness", "disgust", "fear", "surprise"],
                 "aliases": {"happiness": "joy"}}
      })")},
  };
  return presets;
}

struct RunConfig {
  struct Paths {
    std::filesystem::path train, val, test, labels, graph, aliases, out;
  } paths;
  double mu = 0.4;
  double w = 0.35;
  bool use_val_for_graph = true;
  EncoderConfig encoder;
  HeadConfig head;
  TrainOptions optim;  // keep/mode filled from `mode_*` once labels are known
  std::size_t min_freq = 2;
  TaskMode mode = TaskMode::kMultiLabel;
  std::vector<std::string> keep_names;
  std::map<std::string, std::string> aliases;
  std::size_t min_support = 5;
  std::uint64_t seed = 1;
  nlohmann::json resolved;  // the merged document, recorded in manifests
};

namespace detail {

// Every key in `doc` must exist in `schema` (recursively). Objects named
// in `free_form` accept any keys.
inline void check_known_fields(const nlohmann::json& doc, const nlohmann::json& schema,
                               const std::string& where) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string path = where.empty() ? it.key() : where + "." + it.key();
    if (where.empty() && (it.key() == "preset" || it.key() == "notes")) continue;
    if (!schema.contains(it.key())) throw ConfigError("config: unknown field '" + path + "'");
    if (path == "mode.aliases") {
      if (!it.value().is_object()) throw ConfigError("config: 'mode.aliases' must be an object");
      continue;
    }
    if (schema[it.key()].is_object()) {
      if (!it.value().is_object()) throw ConfigError("config: '" + path + "' must be an object");
      check_known_fields(it.value(), schema[it.key()], path);
    }
  }
}

inline std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

template <typename T>
T get_field(const nlohmann::json& j, const char* section, const char* key) {
  try {
    return j.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config: field '") + section + "." + key + "' has the wrong type");
  }
}

}  // namespace detail

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON (" + e.what() + ")");
  }
}

/// Merges defaults, preset and `doc`; does not validate value domains.
inline nlohmann::json merge_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
  const auto schema = default_config();
  detail::check_known_fields(doc, schema, "");
  nlohmann::json merged = schema;
  if (doc.contains("preset")) {
    const auto name = doc["preset"].get<std::string>();
    auto it = builtin_presets().find(name);
    if (it == builtin_presets().end()) {
      std::string known;
      for (const auto& [k, v] : builtin_presets()) known += (known.empty() ? "" : ", ") + k;
      throw ConfigError("config: unknown preset '" + name + "' (known: " + known + ")");
    }
    merged.merge_patch(it->second);
  }
  nlohmann::json body = doc;
  body.erase("preset");
  body.erase("notes");
  // merge_patch replaces arrays wholesale and would drop keys set to null;
  // neither matters for this schema.
  merged.merge_patch(body);
  if (doc.contains("preset")) merged["preset"] = doc["preset"];
  return merged;
}

/// Builds and validates a RunConfig from a merged document. Relative paths
/// resolve against `base_dir`.
inline RunConfig config_from_json(const nlohmann::json& merged, const std::filesystem::path& base_dir) {
  using detail::get_field;
  RunConfig c;
  c.resolved = merged;
  auto path = [&](const char* key) {
    return detail::resolve_path(get_field<std::string>(merged, "paths", key), base_dir);
  };
  c.paths.train = path("train");
  c.paths.val = path("val");
  c.paths.test = path("test");
  c.paths.labels = path("labels");
  c.paths.graph = path("graph");
  c.paths.aliases = path("aliases");
  c.paths.out = path("out");

  c.mu = get_field<double>(merged, "graph", "mu");
  c.w = get_field<double>(merged, "graph", "w");
  c.use_val_for_graph = get_field<bool>(merged, "graph", "use_val_for_graph");
  check_mu(c.mu);
  check_w(c.w);

  c.encoder.kind = parse_encoder_kind(get_field<std::string>(merged, "encoder", "kind"));
  c.encoder.embed_dim = get_field<std::size_t>(merged, "encoder", "embed_dim");
  c.encoder.hidden_dim = get_field<std::size_t>(merged, "encoder", "hidden_dim");
  c.encoder.heads = get_field<std::size_t>(merged, "encoder", "heads");
  c.encoder.depth = get_field<std::size_t>(merged, "encoder", "depth");
  c.encoder.dropout = get_field<double>(merged, "encoder", "dropout");
  c.encoder.max_len = get_field<std::size_t>(merged, "encoder", "max_len");
  c.encoder.validate();

  c.head.kind = parse_head_kind(get_field<std::string>(merged, "head", "kind"));
  c.head.label_embed_dim = get_field<std::size_t>(merged, "head", "label_embed_dim");
  c.head.gat_heads = get_field<std::size_t>(merged, "head", "gat_heads");
  c.head.leaky_slope = get_field<double>(merged, "head", "leaky_slope");
  c.head.out_dim = c.encoder.output_dim();
  c.head.validate(c.encoder);

  c.optim.lr_head = get_field<double>(merged, "optim", "lr_head");
  c.optim.lr_encoder = get_field<double>(merged, "optim", "lr_encoder");
  c.optim.batch_size = get_field<std::size_t>(merged, "optim", "batch_size");
  c.optim.epochs = get_field<std::size_t>(merged, "optim", "epochs");
  c.optim.patience = get_field<std::size_t>(merged, "optim", "patience");
  c.optim.clip_norm = get_field<double>(merged, "optim", "clip_norm");

  c.min_freq = get_field<std::size_t>(merged, "vocab", "min_freq");
  if (c.min_freq == 0) throw ConfigError("config: vocab.min_freq must be >= 1");

  const auto kind = get_field<std::string>(merged, "mode", "kind");
  if (kind == "multilabel") {
    c.mode = TaskMode::kMultiLabel;
  } else if (kind == "singlelabel") {
    c.mode = TaskMode::kSingleLabel;
  } else {
    throw ConfigError("config: mode.kind must be multilabel or singlelabel, got '" + kind + "'");
  }
  c.keep_names = get_field<std::vector<std::string>>(merged, "mode", "keep");
  c.aliases = get_field<std::map<std::string, std::string>>(merged, "mode", "aliases");
  if (c.mode == TaskMode::kSingleLabel && c.keep_names.size() < 2) {
    throw ConfigError("config: singlelabel mode needs at least 2 labels in mode.keep");
  }

  try {
    c.optim.threshold = merged.at("threshold").get<double>();
    c.min_support = merged.at("min_support").get<std::size_t>();
    c.seed = merged.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: threshold/min_support/seed have the wrong type");
  }
  c.optim.mode = c.mode;
  c.optim.seed = c.seed;
  if (!(c.optim.lr_head >= 0.0 && c.optim.lr_encoder >= 0.0)) {
    throw ConfigError("config: learning rates must be >= 0");
  }
  if (c.optim.batch_size == 0 || c.optim.epochs == 0) {
    throw ConfigError("config: batch_size and epochs must be positive");
  }
  if (!(c.optim.threshold >= 0.0 && c.optim.threshold <= 1.0)) {
    throw ConfigError("config: threshold outside [0,1]");
  }

  if (!c.paths.aliases.empty()) {
    const auto extra = read_json_file(c.paths.aliases);
    try {
      for (const auto& [k, v] : extra.get<std::map<std::string, std::string>>()) c.aliases[k] = v;
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(c.paths.aliases.string() + ": alias map must be an object of strings");
    }
  }
  for (const auto* p : {&c.paths.train, &c.paths.val, &c.paths.test, &c.paths.labels, &c.paths.graph}) {
    if (!p->empty() && !std::filesystem::exists(*p)) {
      throw IoError("config: file not found: " + p->string());
    }
  }
  return c;
}

/// Loads `path` (or defaults when empty), applies `overrides` as a JSON
/// merge patch, and validates.
inline RunConfig load_config(const std::filesystem::path& path, const nlohmann::json& overrides = {}) {
  nlohmann::json doc = path.empty() ? nlohmann::json::object() : read_json_file(path);
  if (!overrides.is_null()) {
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    doc.merge_patch(overrides);
  }
  const auto base = path.empty() ? std::filesystem::current_path()
                                 : std::filesystem::absolute(path).parent_path();
  return config_from_json(merge_config(doc), base);
}

}  // namespace emograph
