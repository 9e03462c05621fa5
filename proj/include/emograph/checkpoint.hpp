#pragma once

// Checkpoint container:
//
//   bytes 0..7    magic "EMOGCKPT"
//   bytes 8..15   manifest length L, unsigned 64-bit little-endian
//   next L bytes  UTF-8 JSON manifest
//   remainder     tensor blobs, IEEE-754 binary64 little-endian, row-major
//
// The manifest's "tensors" directory maps each parameter name to
// {"shape": [rows, cols], "offset": byte offset from the start of the blob
// region, "length": byte length}. Parameter order is blob order.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "model.hpp"
#include "train.hpp"

namespace emograph {

inline constexpr std::array<char, 8> kCheckpointMagic = {'E', 'M', 'O', 'G', 'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  Vocabulary vocab;
  TaskMode mode = TaskMode::kMultiLabel;
  std::vector<std::size_t> keep;
  double threshold = 0.5;
};

inline nlohmann::json encoder_json(const EncoderConfig& e) {
  return {{"kind", to_string(e.kind)}, {"embed_dim", e.embed_dim}, {"hidden_dim", e.hidden_dim},
          {"heads", e.heads},          {"depth", e.depth},         {"dropout", e.dropout},
          {"max_len", e.max_len}};
}

inline nlohmann::json head_json(const HeadConfig& h) {
  return {{"kind", to_string(h.kind)},
          {"label_embed_dim", h.label_embed_dim},
          {"out_dim", h.out_dim},
          {"gat_heads", h.gat_heads},
          {"leaky_slope", h.leaky_slope}};
}

inline EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig e;
  e.kind = parse_encoder_kind(j.at("kind").get<std::string>());
  e.embed_dim = j.at("embed_dim").get<std::size_t>();
  e.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  e.heads = j.at("heads").get<std::size_t>();
  e.depth = j.at("depth").get<std::size_t>();
  e.dropout = j.at("dropout").get<double>();
  e.max_len = j.at("max_len").get<std::size_t>();
  return e;
}

inline HeadConfig head_from_json(const nlohmann::json& j) {
  HeadConfig h;
  h.kind = parse_head_kind(j.at("kind").get<std::string>());
  h.label_embed_dim = j.at("label_embed_dim").get<std::size_t>();
  h.out_dim = j.at("out_dim").get<std::size_t>();
  h.gat_heads = j.at("gat_heads").get<std::size_t>();
  h.leaky_slope = j.at("leaky_slope").get<double>();
  return h;
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const Model& m = ck.model;
  const ParamSet& params = m.params();
  nlohmann::json dir = nlohmann::json::object();
  std::string blobs;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params[i];
    dir[params.name(i)] = {{"shape", {t.rows(), t.cols()}},
                           {"offset", blobs.size()},
                           {"length", t.size() * sizeof(double)}};
    for (double v : t.data()) detail::put_u64(blobs, std::bit_cast<std::uint64_t>(v));
  }
  nlohmann::json keep_names = nlohmann::json::array();
  for (auto k : ck.keep) keep_names.push_back(m.labels().name(k));
  nlohmann::json manifest = {
      {"format", "emograph-checkpoint"},
      {"version", kCheckpointVersion},
      {"configs",
       {{"encoder", encoder_json(m.config().encoder)},
        {"head", head_json(m.config().head)},
        {"vocab_size", m.config().vocab_size},
        {"num_labels", m.config().num_labels}}},
      {"labels", m.labels().names()},
      {"graph", graph_to_json(m.graph())},
      {"vocab", ck.vocab.to_json()},
      {"mode", {{"kind", ck.mode == TaskMode::kMultiLabel ? "multilabel" : "singlelabel"},
                {"keep", keep_names}}},
      {"threshold", ck.threshold},
      {"tensors", dir}};
  const std::string text = manifest.dump();
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u64(out, text.size());
  out += text;
  out += blobs;
  return out;
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic.data(), 8) != 0) {
    throw FormatError("checkpoint: bad magic (not an emograph checkpoint)");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t len = detail::get_u64(p + 8);
  if (len > bytes.size() - 16) throw FormatError("checkpoint: truncated manifest");
  nlohmann::json man;
  try {
    man = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: manifest is not JSON: ") + e.what());
  }
  const int version = man.value("version", -1);
  if (man.value("format", std::string{}) != "emograph-checkpoint" || version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version) +
                      " (this build reads version " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t blob_start = 16 + len;
  try {
    const auto& cfgj = man.at("configs");
    ModelConfig cfg;
    cfg.encoder = encoder_from_json(cfgj.at("encoder"));
    cfg.head = head_from_json(cfgj.at("head"));
    cfg.vocab_size = cfgj.at("vocab_size").get<std::size_t>();
    cfg.num_labels = cfgj.at("num_labels").get<std::size_t>();
    EmotionGraph graph = graph_from_json(man.at("graph"));
    if (graph.labels.names() != man.at("labels").get<std::vector<std::string>>()) {
      throw FormatError("checkpoint: label list disagrees with the stored graph");
    }

    // Directory entries in blob order.
    std::vector<std::pair<std::uint64_t, std::string>> entries;
    for (auto it = man.at("tensors").begin(); it != man.at("tensors").end(); ++it) {
      entries.emplace_back(it.value().at("offset").get<std::uint64_t>(), it.key());
    }
    std::sort(entries.begin(), entries.end());
    ParamSet params;
    for (const auto& [offset, name] : entries) {
      const auto& e = man["tensors"][name];
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      const auto length = e.at("length").get<std::uint64_t>();
      if (shape.size() != 2) throw FormatError("checkpoint: tensor '" + name + "' is not 2-D");
      const std::size_t count = shape[0] * shape[1];
      if (length != count * sizeof(double) || blob_start + offset + length > bytes.size()) {
        throw FormatError("checkpoint: tensor '" + name + "' extent is inconsistent");
      }
      std::vector<double> data(count);
      for (std::size_t k = 0; k < count; ++k) {
        data[k] = std::bit_cast<double>(detail::get_u64(p + blob_start + offset + 8 * k));
      }
      params.add(name, Tensor(Shape{shape[0], shape[1]}, std::move(data)));
    }
    Checkpoint ck;
    ck.model = Model::from_parts(cfg, std::move(graph), std::move(params));
    ck.vocab = Vocabulary::from_json(man.at("vocab"));
    if (ck.vocab.size() != cfg.vocab_size) throw FormatError("checkpoint: vocabulary size mismatch");
    const auto& mode = man.at("mode");
    ck.mode = mode.at("kind").get<std::string>() == "singlelabel" ? TaskMode::kSingleLabel
                                                                  : TaskMode::kMultiLabel;
    for (const auto& name : mode.at("keep")) {
      ck.keep.push_back(ck.model.labels().index(name.get<std::string>()));
    }
    ck.threshold = man.at("threshold").get<double>();
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint (version ") + std::to_string(version) +
                      "): " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace emograph
