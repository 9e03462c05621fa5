#pragma once

// Multi-label and single-label evaluation.
//
// Conventions:
//   * Jaccard: an example with empty prediction and empty gold scores 1.
//   * F1 with a zero denominator (no TP, FP or FN) is 0, for micro and for
//     every per-class score.
//   * Macro-F1 averages over every class of the label space, including
//     classes absent from the evaluated split.

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace emograph {

struct ClassScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  bool low_support = false;
};

struct EvalReport {
  double jaccard_accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassScore> per_class;
  std::size_t n_examples = 0;
};

struct SingleLabelReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;            // over every kept class
  double macro_f1_supported = 0.0;  // over kept classes not flagged low-support
  std::vector<ClassScore> per_class;
  std::size_t n_examples = 0;
  std::size_t min_support = 5;
};

namespace detail {

inline std::size_t check_tables(std::span<const LabelRow> preds, std::span<const LabelRow> golds) {
  if (preds.size() != golds.size()) {
    throw DimensionError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(golds.size()) + " gold rows");
  }
  if (preds.empty()) throw ContractError("metrics: no examples");
  const std::size_t n = golds[0].size();
  for (std::size_t r = 0; r < preds.size(); ++r) {
    if (preds[r].size() != n || golds[r].size() != n) {
      throw DimensionError("metrics: row " + std::to_string(r) + " width mismatch (" +
                           std::to_string(preds[r].size()) + " vs " +
                           std::to_string(golds[r].size()) + ", expected " + std::to_string(n) + ")");
    }
  }
  return n;
}

inline double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

inline double safe_ratio(std::size_t a, std::size_t b) {
  return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
}

}  // namespace detail

inline double jaccard_accuracy(std::span<const LabelRow> preds, std::span<const LabelRow> golds) {
  const std::size_t n = detail::check_tables(preds, golds);
  double total = 0.0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const bool p = preds[r][c] != 0, g = golds[r][c] != 0;
      inter += p && g;
      uni += p || g;
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(preds.size());
}

inline double micro_f1(std::span<const LabelRow> preds, std::span<const LabelRow> golds) {
  const std::size_t n = detail::check_tables(preds, golds);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t r = 0; r < preds.size(); ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const bool p = preds[r][c] != 0, g = golds[r][c] != 0;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
  }
  return detail::f1_from_counts(tp, fp, fn);
}

/// Per-class scores in label order; names are left empty.
inline std::vector<ClassScore> per_class_scores(std::span<const LabelRow> preds,
                                                std::span<const LabelRow> golds) {
  const std::size_t n = detail::check_tables(preds, golds);
  std::vector<ClassScore> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < preds.size(); ++r) {
      const bool p = preds[r][c] != 0, g = golds[r][c] != 0;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    out[c].precision = detail::safe_ratio(tp, tp + fp);
    out[c].recall = detail::safe_ratio(tp, tp + fn);
    out[c].f1 = detail::f1_from_counts(tp, fp, fn);
    out[c].support = tp + fn;
  }
  return out;
}

inline double macro_f1(std::span<const LabelRow> preds, std::span<const LabelRow> golds) {
  const auto scores = per_class_scores(preds, golds);
  double s = 0.0;
  for (const auto& c : scores) s += c.f1;
  return s / static_cast<double>(scores.size());
}

inline EvalReport evaluate(std::span<const LabelRow> preds, std::span<const LabelRow> golds,
                           const LabelSpace& labels) {
  EvalReport rep;
  rep.per_class = per_class_scores(preds, golds);
  if (rep.per_class.size() != labels.size()) {
    throw DimensionError("evaluate: tables have " + std::to_string(rep.per_class.size()) +
                         " classes, label space " + std::to_string(labels.size()));
  }
  for (std::size_t c = 0; c < labels.size(); ++c) rep.per_class[c].label = labels.name(c);
  rep.jaccard_accuracy = jaccard_accuracy(preds, golds);
  rep.micro_f1 = micro_f1(preds, golds);
  double s = 0.0;
  for (const auto& c : rep.per_class) s += c.f1;
  rep.macro_f1 = s / static_cast<double>(rep.per_class.size());
  rep.n_examples = preds.size();
  return rep;
}

/// Single-label evaluation over the kept classes. Predictions and golds are
/// label-space indices and must all be members of `kept`.
inline SingleLabelReport single_label_report(std::span<const std::size_t> preds,
                                             std::span<const std::size_t> golds,
                                             std::span<const std::size_t> kept,
                                             const LabelSpace& labels, std::size_t min_support = 5) {
  if (preds.size() != golds.size()) throw DimensionError("single_label_report: length mismatch");
  if (preds.empty()) throw ContractError("single_label_report: no examples");
  auto in_kept = [&](std::size_t i) { return std::find(kept.begin(), kept.end(), i) != kept.end(); };
  for (std::size_t r = 0; r < preds.size(); ++r) {
    if (!in_kept(preds[r]) || !in_kept(golds[r])) {
      throw ContractError("single_label_report: index outside the kept set at row " +
                          std::to_string(r));
    }
  }
  SingleLabelReport rep;
  rep.n_examples = preds.size();
  rep.min_support = min_support;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < preds.size(); ++r) correct += preds[r] == golds[r];
  rep.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
  double sum_all = 0.0, sum_supported = 0.0;
  std::size_t n_supported = 0;
  for (std::size_t k : kept) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < preds.size(); ++r) {
      tp += preds[r] == k && golds[r] == k;
      fp += preds[r] == k && golds[r] != k;
      fn += preds[r] != k && golds[r] == k;
    }
    ClassScore cs;
    cs.label = labels.name(k);
    cs.precision = detail::safe_ratio(tp, tp + fp);
    cs.recall = detail::safe_ratio(tp, tp + fn);
    cs.f1 = detail::f1_from_counts(tp, fp, fn);
    cs.support = tp + fn;
    cs.low_support = cs.support < min_support;
    sum_all += cs.f1;
    if (!cs.low_support) {
      sum_supported += cs.f1;
      ++n_supported;
    }
    rep.per_class.push_back(cs);
  }
  rep.macro_f1 = sum_all / static_cast<double>(kept.size());
  rep.macro_f1_supported = n_supported ? sum_supported / static_cast<double>(n_supported) : 0.0;
  return rep;
}

/// k folds over a seeded permutation of [0, n). Fold f takes the next
/// n/k (+1 for the first n%k folds) permuted indices as its test set; the
/// training set is every other index in ascending order.
inline std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> kfold_split(
    std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ContractError("kfold_split: k must be >= 2");
  if (k > n) {
    throw ContractError("kfold_split: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);
  std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> folds;
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = n / k + (f < n % k ? 1 : 0);
    std::vector<std::size_t> test(perm.begin() + start, perm.begin() + start + len);
    std::vector<char> is_test(n, 0);
    for (auto i : test) is_test[i] = 1;
    std::vector<std::size_t> train;
    train.reserve(n - len);
    for (std::size_t i = 0; i < n; ++i)
      if (!is_test[i]) train.push_back(i);
    folds.emplace_back(std::move(train), std::move(test));
    start += len;
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Serialization and rendering

inline nlohmann::json class_score_json(const ClassScore& c) {
  return {{"label", c.label},   {"precision", c.precision}, {"recall", c.recall},
          {"f1", c.f1},         {"support", c.support},     {"low_support", c.low_support}};
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json pc = nlohmann::json::array();
  for (const auto& c : r.per_class) pc.push_back(class_score_json(c));
  return {{"jaccard_accuracy", r.jaccard_accuracy},
          {"micro_f1", r.micro_f1},
          {"macro_f1", r.macro_f1},
          {"per_class", pc},
          {"n_examples", r.n_examples}};
}

inline nlohmann::json to_json(const SingleLabelReport& r) {
  nlohmann::json pc = nlohmann::json::array();
  for (const auto& c : r.per_class) pc.push_back(class_score_json(c));
  return {{"accuracy", r.accuracy},
          {"macro_f1", r.macro_f1},
          {"macro_f1_supported", r.macro_f1_supported},
          {"per_class", pc},
          {"n_examples", r.n_examples},
          {"min_support", r.min_support}};
}

inline std::string render_table(const EvalReport& r) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %9s %9s %9s %8s\n", "label", "precision", "recall", "f1",
                "support");
  os << buf;
  for (const auto& c : r.per_class) {
    std::snprintf(buf, sizeof buf, "%-16s %9.4f %9.4f %9.4f %8zu\n", c.label.c_str(), c.precision,
                  c.recall, c.f1, c.support);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "\n%-16s %9s %9s %9s\n%-16s %9.4f %9.4f %9.4f\n", "", "Accuracy",
                "Micro-F1", "Macro-F1", "", r.jaccard_accuracy, r.micro_f1, r.macro_f1);
  os << buf;
  std::snprintf(buf, sizeof buf, "(%zu examples)\n", r.n_examples);
  os << buf;
  return os.str();
}

/// One row of per-class F1 columns followed by average F1 and accuracy.
/// Low-support classes print "-" and are left out of the average.
inline std::string render_table(const SingleLabelReport& r) {
  std::ostringstream os;
  char buf[64];
  for (const auto& c : r.per_class) {
    std::snprintf(buf, sizeof buf, "%12s", c.label.c_str());
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%12s%12s\n", "Average F1", "Accuracy");
  os << buf;
  for (const auto& c : r.per_class) {
    if (c.low_support) {
      std::snprintf(buf, sizeof buf, "%12s", "-");
    } else {
      std::snprintf(buf, sizeof buf, "%12.1f", 100.0 * c.f1);
    }
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%12.1f%12.1f\n", 100.0 * r.macro_f1_supported, 100.0 * r.accuracy);
  os << buf;
  for (const auto& c : r.per_class) {
    if (c.low_support) {
      os << "note: '" << c.label << "' has support " << c.support << " < " << r.min_support
         << " (not reported)\n";
    }
  }
  return os.str();
}

}  // namespace emograph
