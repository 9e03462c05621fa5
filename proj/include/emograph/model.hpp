#pragma once

// Classifier-generating model: a sentence encoder produces s, a graph head
// turns label embeddings into one classifier vector per emotion, and the
// logit of emotion i is the inner product <s, C_i>.
//
//   GCN head:  C = ReLU(G~ * E_e * W1)
//   GAT head:  C = ReLU(concat_h( softmax_mask(LeakyReLU(f_src 1^T + 1 f_dst^T)) * E_e W_h ))
//   flat head: logits = s * W_flat (no graph; baseline)

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autodiff.hpp"
#include "corpus.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "init.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace emograph {

enum class EncoderKind { kMeanPool, kSelfAttn };
enum class HeadKind { kGcn, kGat, kFlat };

inline std::string to_string(EncoderKind k) { return k == EncoderKind::kMeanPool ? "meanpool" : "selfattn"; }
inline std::string to_string(HeadKind k) {
  switch (k) {
    case HeadKind::kGcn: return "gcn";
    case HeadKind::kGat: return "gat";
    case HeadKind::kFlat: return "flat";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "meanpool") return EncoderKind::kMeanPool;
  if (s == "selfattn") return EncoderKind::kSelfAttn;
  throw ConfigError("unknown encoder kind '" + std::string(s) + "' (meanpool|selfattn)");
}

inline HeadKind parse_head_kind(std::string_view s) {
  if (s == "gcn") return HeadKind::kGcn;
  if (s == "gat") return HeadKind::kGat;
  if (s == "flat") return HeadKind::kFlat;
  throw ConfigError("unknown head kind '" + std::string(s) + "' (gcn|gat|flat)");
}

struct EncoderConfig {
  EncoderKind kind = EncoderKind::kMeanPool;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 64;
  std::size_t heads = 4;
  std::size_t depth = 2;
  double dropout = 0.0;
  std::size_t max_len = 64;

  /// Width of s: hidden_dim for meanpool, embed_dim for selfattn.
  std::size_t output_dim() const noexcept {
    return kind == EncoderKind::kMeanPool ? hidden_dim : embed_dim;
  }

  void validate() const {
    if (embed_dim == 0 || hidden_dim == 0 || max_len == 0) {
      throw ConfigError("encoder: embed_dim, hidden_dim and max_len must be positive");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      throw ConfigError("encoder: dropout=" + std::to_string(dropout) + " outside [0,1)");
    }
    if (kind == EncoderKind::kSelfAttn) {
      if (heads == 0 || hidden_dim % heads != 0) {
        throw ConfigError("encoder: hidden_dim=" + std::to_string(hidden_dim) +
                          " not divisible by heads=" + std::to_string(heads));
      }
      if (depth == 0) throw ConfigError("encoder: selfattn depth must be >= 1");
    }
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct HeadConfig {
  HeadKind kind = HeadKind::kGcn;
  std::size_t label_embed_dim = 64;
  std::size_t out_dim = 64;
  std::size_t gat_heads = 4;
  double leaky_slope = 0.2;

  void validate(const EncoderConfig& enc) const {
    if (out_dim != enc.output_dim()) {
      throw ConfigError("head: out_dim=" + std::to_string(out_dim) +
                        " must equal encoder output dim " + std::to_string(enc.output_dim()));
    }
    if (label_embed_dim == 0) throw ConfigError("head: label_embed_dim must be positive");
    if (kind == HeadKind::kGat && (gat_heads == 0 || out_dim % gat_heads != 0)) {
      throw ConfigError("head: gat_heads=" + std::to_string(gat_heads) +
                        " times per-head dim cannot equal out_dim=" + std::to_string(out_dim));
    }
  }

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  HeadConfig head;
  std::size_t vocab_size = 0;
  std::size_t num_labels = 0;

  void validate() const {
    encoder.validate();
    head.validate(encoder);
    if (vocab_size < 5) throw ConfigError("model: vocab_size must cover the 5 reserved tokens");
    if (num_labels < 2) throw ConfigError("model: need at least 2 labels");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Ordered named tensors. Order is creation order and defines the
/// checkpoint layout and the gradient vector layout.
class ParamSet {
 public:
  Tensor& add(std::string name, Tensor t) {
    if (find(name)) throw ContractError("ParamSet: duplicate parameter '" + name + "'");
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(t));
    return tensors_.back();
  }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  std::size_t index(std::string_view name) const {
    if (auto i = find(name)) return *i;
    throw ContractError("ParamSet: no parameter '" + std::string(name) + "'");
  }

  Tensor& at(std::string_view name) { return tensors_[index(name)]; }
  const Tensor& at(std::string_view name) const { return tensors_[index(name)]; }
  Tensor& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor& operator[](std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return tensors_.size(); }

  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

/// Graph-head parameters train under their own optimizer.
inline bool is_head_param(std::string_view name) {
  return name == "label_embedding" || name.starts_with("gcn.") || name.starts_with("gat.") ||
         name.starts_with("flat.");
}

// ---------------------------------------------------------------------------
// Heads and scoring over tape variables

/// C = ReLU(G~ E_e W1): n x out_dim.
inline ad::Var gcn_head(const ad::Var& g_tilde, const ad::Var& label_embedding, const ad::Var& w1) {
  return ad::relu(ad::matmul(ad::matmul(g_tilde, label_embedding), w1));
}

struct GatHeadVars {
  ad::Var w;      // label_embed_dim x d_h
  ad::Var a_src;  // d_h x 1
  ad::Var a_dst;  // d_h x 1
};

/// Attention mask for GAT: nonzero G2 entries plus every self-loop.
inline Tensor gat_mask(const Tensor& g2) {
  Tensor m(g2.shape(), 0.0);
  for (std::size_t i = 0; i < g2.rows(); ++i)
    for (std::size_t j = 0; j < g2.cols(); ++j) m(i, j) = (i == j || g2(i, j) != 0.0) ? 1.0 : 0.0;
  return m;
}

/// Attention coefficients of one head: n x n, rows sum to 1 over the mask.
inline ad::Var gat_attention(const Tensor& mask, const ad::Var& projected, const GatHeadVars& h,
                             double slope) {
  ad::Var f_src = ad::matmul(projected, h.a_src);
  ad::Var f_dst = ad::matmul(projected, h.a_dst);
  ad::Var scores = ad::leaky_relu(ad::outer_add(f_src, f_dst), slope);
  return ad::softmax_rows(scores, mask);
}

inline ad::Var gat_head(const Tensor& g2, const ad::Var& label_embedding,
                        std::span<const GatHeadVars> heads, double slope, std::size_t out_dim) {
  std::size_t total = 0;
  for (const auto& h : heads) total += h.w.shape().cols;
  if (total != out_dim) {
    throw ConfigError("gat_head: heads produce " + std::to_string(total) + " columns, out_dim=" +
                      std::to_string(out_dim));
  }
  const Tensor mask = gat_mask(g2);
  std::vector<ad::Var> outs;
  outs.reserve(heads.size());
  for (const auto& h : heads) {
    ad::Var projected = ad::matmul(label_embedding, h.w);
    ad::Var alpha = gat_attention(mask, projected, h, slope);
    outs.push_back(ad::matmul(alpha, projected));
  }
  return ad::relu(ad::concat_cols(outs));
}

/// Logits for a batch of sentence vectors S (B x d) against classifiers
/// C (n x d): S C^T, i.e. logit_i = <s, C_i>.
inline ad::Var score(const ad::Var& sentences, const ad::Var& classifiers) {
  if (sentences.shape().cols != classifiers.shape().cols) {
    throw DimensionError("score: sentence dim " + sentences.shape().str() + " vs classifiers " +
                         classifiers.shape().str());
  }
  return ad::matmul(sentences, ad::transpose(classifiers));
}

/// Mean over examples and classes of the sigmoid cross-entropy.
inline ad::Var multilabel_loss(const ad::Var& logits, const Tensor& targets) {
  return ad::sigmoid_cross_entropy(logits, targets);
}

/// Softmax cross-entropy restricted to the kept classifiers.
inline ad::Var singlelabel_loss(const ad::Var& logits, std::span<const std::size_t> keep,
                                std::span<const std::size_t> gold) {
  return ad::subset_softmax_cross_entropy(logits, keep, gold);
}

// ---------------------------------------------------------------------------
// Model

class Model {
 public:
  Model() = default;

  /// Parameters are drawn from one Rng(seed) stream in this order:
  /// token_embedding; encoder (meanpool: enc.w, enc.b | selfattn: enc.pos,
  /// then per block wq, wk, wv, wo, ln1_g, ln1_b, ff1_w, ff1_b, ff2_w,
  /// ff2_b, ln2_g, ln2_b); head (gcn: label_embedding, gcn.w1 | gat:
  /// label_embedding, then per head w, a_src, a_dst | flat: flat.w).
  static Model create(const ModelConfig& cfg, EmotionGraph graph, std::uint64_t seed) {
    cfg.validate();
    if (graph.size() != cfg.num_labels) {
      throw DimensionError("Model: graph has " + std::to_string(graph.size()) + " labels, config " +
                           std::to_string(cfg.num_labels));
    }
    Model m;
    m.cfg_ = cfg;
    m.graph_ = std::move(graph);
    Rng rng(seed);
    const auto& e = cfg.encoder;
    const auto& h = cfg.head;
    auto& p = m.params_;
    p.add("token_embedding", init_tensor({cfg.vocab_size, e.embed_dim}, Uniform{-0.1, 0.1}, rng));
    if (e.kind == EncoderKind::kMeanPool) {
      p.add("enc.w", init_tensor({e.embed_dim, e.hidden_dim}, GlorotUniform{}, rng));
      p.add("enc.b", init_tensor({1, e.hidden_dim}, Zeros{}, rng));
    } else {
      p.add("enc.pos", init_tensor({e.max_len, e.embed_dim}, Uniform{-0.1, 0.1}, rng));
      for (std::size_t b = 0; b < e.depth; ++b) {
        const std::string pre = "enc.block" + std::to_string(b) + ".";
        p.add(pre + "wq", init_tensor({e.embed_dim, e.hidden_dim}, GlorotUniform{}, rng));
        p.add(pre + "wk", init_tensor({e.embed_dim, e.hidden_dim}, GlorotUniform{}, rng));
        p.add(pre + "wv", init_tensor({e.embed_dim, e.hidden_dim}, GlorotUniform{}, rng));
        p.add(pre + "wo", init_tensor({e.hidden_dim, e.embed_dim}, GlorotUniform{}, rng));
        p.add(pre + "ln1_g", init_tensor({1, e.embed_dim}, Constant{1.0}, rng));
        p.add(pre + "ln1_b", init_tensor({1, e.embed_dim}, Zeros{}, rng));
        p.add(pre + "ff1_w", init_tensor({e.embed_dim, e.hidden_dim}, GlorotUniform{}, rng));
        p.add(pre + "ff1_b", init_tensor({1, e.hidden_dim}, Zeros{}, rng));
        p.add(pre + "ff2_w", init_tensor({e.hidden_dim, e.embed_dim}, GlorotUniform{}, rng));
        p.add(pre + "ff2_b", init_tensor({1, e.embed_dim}, Zeros{}, rng));
        p.add(pre + "ln2_g", init_tensor({1, e.embed_dim}, Constant{1.0}, rng));
        p.add(pre + "ln2_b", init_tensor({1, e.embed_dim}, Zeros{}, rng));
      }
    }
    const std::size_t n = cfg.num_labels;
    switch (h.kind) {
      case HeadKind::kGcn:
        p.add("label_embedding", init_tensor({n, h.label_embed_dim}, GlorotUniform{}, rng));
        p.add("gcn.w1", init_tensor({h.label_embed_dim, h.out_dim}, GlorotUniform{}, rng));
        break;
      case HeadKind::kGat: {
        p.add("label_embedding", init_tensor({n, h.label_embed_dim}, GlorotUniform{}, rng));
        const std::size_t dh = h.out_dim / h.gat_heads;
        for (std::size_t k = 0; k < h.gat_heads; ++k) {
          const std::string pre = "gat.head" + std::to_string(k) + ".";
          p.add(pre + "w", init_tensor({h.label_embed_dim, dh}, GlorotUniform{}, rng));
          p.add(pre + "a_src", init_tensor({dh, 1}, GlorotUniform{}, rng));
          p.add(pre + "a_dst", init_tensor({dh, 1}, GlorotUniform{}, rng));
        }
        break;
      }
      case HeadKind::kFlat:
        p.add("flat.w", init_tensor({h.out_dim, n}, GlorotUniform{}, rng));
        break;
    }
    return m;
  }

  /// Reassembles a model from stored parts; every expected tensor must be
  /// present with the shape create() would give it.
  static Model from_parts(const ModelConfig& cfg, EmotionGraph graph, ParamSet params) {
    Model m = create(cfg, std::move(graph), 0);
    if (params.names() != m.params_.names()) {
      throw FormatError("Model: stored parameter names do not match the configuration");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].shape() != m.params_[i].shape()) {
        throw FormatError("Model: parameter '" + params.name(i) + "' has shape " +
                          params[i].shape().str() + ", expected " + m.params_[i].shape().str());
      }
    }
    m.params_ = std::move(params);
    return m;
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const EmotionGraph& graph() const noexcept { return graph_; }
  const LabelSpace& labels() const noexcept { return graph_.labels; }
  ParamSet& params() noexcept { return params_; }
  const ParamSet& params() const noexcept { return params_; }

  /// One forward pass bound to a tape: every parameter becomes a leaf.
  class Pass {
   public:
    Pass(const Model& model, ad::Tape& tape) : model_(model), tape_(tape) {
      leaves_.reserve(model.params_.size());
      for (std::size_t i = 0; i < model.params_.size(); ++i) {
        leaves_.push_back(tape.leaf(model.params_[i]));
      }
    }

    ad::Var param(std::string_view name) const { return leaves_[model_.params_.index(name)]; }

    /// Sentence representation s (1 x out_dim).
    ad::Var encode(std::span<const TokenId> tokens, bool train, Rng* rng) {
      const auto& e = model_.cfg_.encoder;
      if (tokens.empty()) throw ContractError("encode: empty token list");
      if (tokens.size() > e.max_len) {
        throw ContractError("encode: " + std::to_string(tokens.size()) + " tokens exceed max_len " +
                            std::to_string(e.max_len));
      }
      if (train && e.dropout > 0.0 && rng == nullptr) {
        throw ContractError("encode: training with dropout needs an Rng");
      }
      Rng dummy(0);
      Rng& r = rng ? *rng : dummy;
      ad::Var x = ad::gather_rows(param("token_embedding"), tokens);
      if (e.kind == EncoderKind::kMeanPool) {
        ad::Var pooled = ad::dropout(ad::mean_rows(x), e.dropout, r, train);
        return ad::tanh(ad::add_row_bias(ad::matmul(pooled, param("enc.w")), param("enc.b")));
      }
      std::vector<std::size_t> positions(tokens.size());
      for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
      x = ad::add(x, ad::gather_rows(param("enc.pos"), positions));
      x = ad::dropout(x, e.dropout, r, train);
      for (std::size_t b = 0; b < e.depth; ++b) x = transformer_block(x, b, train, r);
      return ad::mean_rows(x);
    }

    /// Classifier bank C (n x out_dim); not defined for the flat head.
    ad::Var classifiers() {
      const auto& h = model_.cfg_.head;
      switch (h.kind) {
        case HeadKind::kGcn: {
          ad::Var gt = tape_.constant(model_.graph_.g_tilde);
          return gcn_head(gt, param("label_embedding"), param("gcn.w1"));
        }
        case HeadKind::kGat: {
          std::vector<GatHeadVars> heads;
          for (std::size_t k = 0; k < h.gat_heads; ++k) {
            const std::string pre = "gat.head" + std::to_string(k) + ".";
            heads.push_back({param(pre + "w"), param(pre + "a_src"), param(pre + "a_dst")});
          }
          return gat_head(model_.graph_.g2, param("label_embedding"), heads, h.leaky_slope,
                          h.out_dim);
        }
        case HeadKind::kFlat:
          break;
      }
      throw ContractError("classifiers: the flat head has no classifier bank");
    }

    /// Logits for a batch of token lists: B x n.
    ad::Var logits(std::span<const std::vector<TokenId>> batch, bool train, Rng* rng) {
      if (batch.empty()) throw ContractError("logits: empty batch");
      std::vector<ad::Var> rows;
      rows.reserve(batch.size());
      for (const auto& toks : batch) rows.push_back(encode(toks, train, rng));
      ad::Var s = rows.size() == 1 ? rows[0] : ad::concat_rows(rows);
      if (model_.cfg_.head.kind == HeadKind::kFlat) return ad::matmul(s, param("flat.w"));
      return score(s, classifiers());
    }

    /// Parameter gradients in ParamSet order; valid after tape.backward().
    std::vector<Tensor> gradients() const {
      std::vector<Tensor> g;
      g.reserve(leaves_.size());
      for (const auto& v : leaves_) g.push_back(v.grad());
      return g;
    }

   private:
    ad::Var transformer_block(const ad::Var& x, std::size_t b, bool train, Rng& rng) {
      const auto& e = model_.cfg_.encoder;
      const std::string pre = "enc.block" + std::to_string(b) + ".";
      ad::Var q = ad::matmul(x, param(pre + "wq"));
      ad::Var k = ad::matmul(x, param(pre + "wk"));
      ad::Var v = ad::matmul(x, param(pre + "wv"));
      const std::size_t dh = e.hidden_dim / e.heads;
      const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
      std::vector<ad::Var> heads;
      heads.reserve(e.heads);
      for (std::size_t h = 0; h < e.heads; ++h) {
        ad::Var qh = ad::slice_cols(q, h * dh, dh);
        ad::Var kh = ad::slice_cols(k, h * dh, dh);
        ad::Var vh = ad::slice_cols(v, h * dh, dh);
        ad::Var att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt));
        heads.push_back(ad::matmul(att, vh));
      }
      ad::Var attn = ad::matmul(ad::concat_cols(heads), param(pre + "wo"));
      ad::Var x1 = ad::layer_norm(ad::add(x, ad::dropout(attn, e.dropout, rng, train)),
                                  param(pre + "ln1_g"), param(pre + "ln1_b"));
      ad::Var ff = ad::relu(ad::add_row_bias(ad::matmul(x1, param(pre + "ff1_w")), param(pre + "ff1_b")));
      ff = ad::add_row_bias(ad::matmul(ff, param(pre + "ff2_w")), param(pre + "ff2_b"));
      return ad::layer_norm(ad::add(x1, ad::dropout(ff, e.dropout, rng, train)), param(pre + "ln2_g"),
                            param(pre + "ln2_b"));
    }

    const Model& model_;
    ad::Tape& tape_;
    std::vector<ad::Var> leaves_;
  };

  /// Eval-mode logits for a batch (B x n).
  Tensor forward(std::span<const std::vector<TokenId>> batch) const {
    ad::Tape tape;
    Pass pass(*this, tape);
    return pass.logits(batch, false, nullptr).value();
  }

  /// Eval-mode logits for one token list (1 x n).
  Tensor forward(std::span<const TokenId> tokens) const {
    std::vector<std::vector<TokenId>> batch{std::vector<TokenId>(tokens.begin(), tokens.end())};
    return forward(std::span<const std::vector<TokenId>>(batch));
  }

  /// Eval-mode classifier bank C (n x out_dim).
  Tensor classifier_bank() const {
    ad::Tape tape;
    Pass pass(*this, tape);
    return pass.classifiers().value();
  }

 private:
  ModelConfig cfg_;
  EmotionGraph graph_;
  ParamSet params_;
};

}  // namespace emograph
