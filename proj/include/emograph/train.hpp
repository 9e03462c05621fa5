#pragma once

// Mini-batch training with two Adam optimizers (graph head vs. encoder and
// token embeddings), global-norm clipping, and early stopping on
// validation Jaccard accuracy.
//
// Randomness: parameters come from Rng(seed) inside Model::create; the
// training loop owns a second stream Rng(seed ^ kTrainStreamSalt) that, per
// epoch, first shuffles the example order and then supplies dropout draws
// batch by batch, example by example, in encoder op order.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "adam.hpp"
#include "corpus.hpp"
#include "eval.hpp"
#include "model.hpp"

namespace emograph {

inline constexpr std::uint64_t kTrainStreamSalt = 0xD1B54A32D192ED03ULL;

enum class TaskMode { kMultiLabel, kSingleLabel };

struct TrainOptions {
  double lr_head = 1e-3;
  double lr_encoder = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::size_t patience = 5;
  double clip_norm = 5.0;  // <= 0 disables clipping
  double threshold = 0.5;
  TaskMode mode = TaskMode::kMultiLabel;
  std::vector<std::size_t> keep;  // single-label: kept label indices
  std::uint64_t seed = 0;
  /// Stop as soon as the selection metric reaches this value.
  std::optional<double> stop_at;

  void validate(std::size_t n_labels) const {
    if (!(lr_head >= 0.0) || !(lr_encoder >= 0.0)) throw ConfigError("learning rates must be >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold outside [0,1]");
    if (mode == TaskMode::kSingleLabel) {
      if (keep.size() < 2) throw ConfigError("single-label mode needs at least 2 kept labels");
      for (auto k : keep)
        if (k >= n_labels) throw ConfigError("kept label index out of range");
    }
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_jaccard = 0.0;
  double val_micro_f1 = 0.0;
  double val_macro_f1 = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

inline nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"val_jaccard", e.val_jaccard},
          {"val_micro_f1", e.val_micro_f1},
          {"val_macro_f1", e.val_macro_f1}};
}

struct TrainResult {
  Model model;  // best-validation parameters
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_jaccard = 0.0;
};

// ---------------------------------------------------------------------------
// Decision rules

/// Labels with sigmoid(logit) >= threshold.
inline LabelRow decide_multilabel(std::span<const double> logits, double threshold) {
  LabelRow row(logits.size(), 0);
  for (std::size_t i = 0; i < logits.size(); ++i) row[i] = kernels::sigmoid(logits[i]) >= threshold;
  return row;
}

/// Argmax over the kept indices (first wins on ties).
inline std::size_t decide_single(std::span<const double> logits, std::span<const std::size_t> keep) {
  std::size_t best = keep.front();
  for (auto k : keep)
    if (logits[k] > logits[best]) best = k;
  return best;
}

/// Gold index of a one-hot example in single-label mode.
inline std::size_t gold_index(const LabelRow& y, std::span<const std::size_t> keep) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!y[i]) continue;
    if (found) throw ContractError("single-label example carries more than one label");
    found = i;
  }
  if (!found) throw ContractError("single-label example carries no label");
  if (std::find(keep.begin(), keep.end(), *found) == keep.end()) {
    throw ContractError("single-label example's label is not in the kept set");
  }
  return *found;
}

/// Predicted label rows for a split, batched for speed.
inline std::vector<LabelRow> predict_rows(const Model& model, std::span<const Example> examples,
                                          const TrainOptions& opts, std::size_t batch = 64) {
  std::vector<LabelRow> out;
  out.reserve(examples.size());
  const std::size_t n = model.labels().size();
  for (std::size_t start = 0; start < examples.size(); start += batch) {
    const std::size_t end = std::min(examples.size(), start + batch);
    std::vector<std::vector<TokenId>> toks;
    for (std::size_t i = start; i < end; ++i) toks.push_back(examples[i].tokens);
    const Tensor logits = model.forward(std::span<const std::vector<TokenId>>(toks));
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      if (opts.mode == TaskMode::kMultiLabel) {
        out.push_back(decide_multilabel(logits.row_span(r), opts.threshold));
      } else {
        LabelRow row(n, 0);
        row[decide_single(logits.row_span(r), opts.keep)] = 1;
        out.push_back(std::move(row));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

inline double global_norm(const std::vector<Tensor>& grads) {
  double s = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace detail

/// Loss of one batch on a fresh tape; returns the loss and fills `grads`.
inline double batch_loss_and_grads(const Model& model, std::span<const Example* const> batch,
                                   const TrainOptions& opts, Rng& rng, bool train,
                                   std::vector<Tensor>* grads) {
  ad::Tape tape;
  Model::Pass pass(model, tape);
  std::vector<std::vector<TokenId>> toks;
  toks.reserve(batch.size());
  for (const auto* ex : batch) toks.push_back(ex->tokens);
  ad::Var logits = pass.logits(std::span<const std::vector<TokenId>>(toks), train, &rng);
  ad::Var loss;
  if (opts.mode == TaskMode::kMultiLabel) {
    const std::size_t n = model.labels().size();
    Tensor y(batch.size(), n);
    for (std::size_t r = 0; r < batch.size(); ++r)
      for (std::size_t c = 0; c < n; ++c) y(r, c) = batch[r]->labels[c];
    loss = multilabel_loss(logits, y);
  } else {
    std::vector<std::size_t> gold;
    for (const auto* ex : batch) gold.push_back(gold_index(ex->labels, opts.keep));
    loss = singlelabel_loss(logits, opts.keep, gold);
  }
  if (grads) {
    tape.backward(loss);
    *grads = pass.gradients();
  }
  return loss.value().item();
}

/// Trains `model` in place of a copy and returns the best-validation
/// snapshot. With an empty `val`, selection runs on the training split.
/// `on_epoch`, if set, sees each log entry as it is produced.
inline TrainResult train(Model model, std::span<const Example> train_set,
                         std::span<const Example> val, const TrainOptions& opts,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  if (train_set.empty()) throw ContractError("train: empty training split");
  opts.validate(model.labels().size());
  const std::span<const Example> select = val.empty() ? train_set : val;

  ParamSet& params = model.params();
  std::vector<std::size_t> head_idx, enc_idx;
  for (std::size_t i = 0; i < params.size(); ++i) {
    (is_head_param(params.name(i)) ? head_idx : enc_idx).push_back(i);
  }
  auto ptrs = [&](const std::vector<std::size_t>& idx) {
    std::vector<const Tensor*> v;
    for (auto i : idx) v.push_back(&params[i]);
    return v;
  };
  Adam head_opt(ptrs(head_idx), AdamOptions{.lr = opts.lr_head});
  Adam enc_opt(ptrs(enc_idx), AdamOptions{.lr = opts.lr_encoder});

  Rng rng(opts.seed ^ kTrainStreamSalt);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.model = model;
  result.best_val_jaccard = -1.0;
  std::size_t since_best = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      const std::size_t end = std::min(order.size(), start + opts.batch_size);
      std::vector<const Example*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_set[order[i]]);
      std::vector<Tensor> grads;
      const double loss = batch_loss_and_grads(model, batch, opts, rng, true, &grads);
      ++step;
      if (!std::isfinite(loss)) throw DivergenceError(epoch, step, loss);
      const double norm = detail::global_norm(grads);
      if (!std::isfinite(norm)) throw DivergenceError(epoch, step, norm);
      if (opts.clip_norm > 0.0 && norm > opts.clip_norm) {
        const double s = opts.clip_norm / norm;
        for (auto& g : grads)
          for (double& v : g.data()) v *= s;
      }
      loss_sum += loss * static_cast<double>(batch.size());

      std::vector<Tensor*> hp, ep;
      std::vector<const Tensor*> hg, eg;
      for (auto i : head_idx) {
        hp.push_back(&params[i]);
        hg.push_back(&grads[i]);
      }
      for (auto i : enc_idx) {
        ep.push_back(&params[i]);
        eg.push_back(&grads[i]);
      }
      head_opt.step(hp, hg);
      enc_opt.step(ep, eg);
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    const auto preds = predict_rows(model, select, opts);
    std::vector<LabelRow> golds;
    golds.reserve(select.size());
    for (const auto& ex : select) golds.push_back(ex.labels);
    entry.val_jaccard = jaccard_accuracy(preds, golds);
    entry.val_micro_f1 = micro_f1(preds, golds);
    entry.val_macro_f1 = macro_f1(preds, golds);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    if (entry.val_jaccard > result.best_val_jaccard) {
      result.best_val_jaccard = entry.val_jaccard;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      break;
    }
    if (opts.stop_at && entry.val_jaccard >= *opts.stop_at) break;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prediction

struct Prediction {
  std::vector<std::string> labels;
  std::vector<double> probabilities;  // one per label in label-space order
};

/// Multi-label: sigmoid per label, labels at or above `threshold`.
/// Single-label: softmax over the kept labels (others 0), argmax label.
inline Prediction predict(const Model& model, std::span<const TokenId> tokens, TaskMode mode,
                          std::span<const std::size_t> keep, double threshold = 0.5) {
  const Tensor logits = model.forward(tokens);
  const auto row = logits.row_span(0);
  Prediction p;
  const auto& names = model.labels().names();
  if (mode == TaskMode::kMultiLabel) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      p.probabilities.push_back(kernels::sigmoid(row[i]));
      if (p.probabilities.back() >= threshold) p.labels.push_back(names[i]);
    }
  } else {
    if (keep.empty()) throw ContractError("predict: single-label mode needs kept labels");
    p.probabilities.assign(row.size(), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (auto k : keep) mx = std::max(mx, row[k]);
    double s = 0.0;
    for (auto k : keep) s += std::exp(row[k] - mx);
    for (auto k : keep) p.probabilities[k] = std::exp(row[k] - mx) / s;
    p.labels.push_back(names[decide_single(row, keep)]);
  }
  return p;
}

}  // namespace emograph
