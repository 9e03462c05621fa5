#pragma once

// Command implementations behind the `emograph` tool. Each command reads a
// validated RunConfig, writes its artifacts under the configured output
// directory together with a manifest.json holding the resolved config, and
// reports human-readable progress on the given stream.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "checkpoint.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "eval.hpp"
#include "graph.hpp"
#include "log.hpp"
#include "model.hpp"
#include "train.hpp"

namespace emograph::cli {

namespace fs = std::filesystem;

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("short write to " + path.string());
}

inline void write_manifest(const RunConfig& c, const std::string& command,
                           const std::vector<fs::path>& artifacts) {
  nlohmann::json names = nlohmann::json::array();
  for (const auto& a : artifacts) names.push_back(a.filename().string());
  nlohmann::json m = {{"command", command}, {"config", c.resolved}, {"artifacts", names}};
  write_text(c.paths.out / "manifest.json", m.dump(2) + "\n");
}

inline CorpusOptions corpus_options(const RunConfig& c) {
  CorpusOptions o;
  o.min_freq = c.min_freq;
  o.max_len = c.encoder.max_len;
  o.aliases = c.aliases;
  return o;
}

struct TrainingData {
  LabelSpace labels;
  Vocabulary vocab;
  std::vector<Example> train;
  std::vector<Example> val;
  std::vector<Example> test;
};

/// Loads the configured splits. The label space is fixed by `fixed` when
/// given, else by the label file, else by first appearance in training.
inline TrainingData load_data(const RunConfig& c, const std::optional<LabelSpace>& fixed = std::nullopt) {
  if (c.paths.train.empty()) throw ConfigError("config: paths.train is required");
  std::optional<LabelSpace> space = fixed;
  if (!space && !c.paths.labels.empty()) space = read_label_file(c.paths.labels);
  const auto opts = corpus_options(c);
  Corpus corpus = load_corpus(c.paths.train, space, opts);
  TrainingData d{corpus.labels, corpus.vocab, std::move(corpus.examples), {}, {}};
  if (!c.paths.val.empty()) d.val = load_split(c.paths.val, d.labels, d.vocab, opts);
  if (!c.paths.test.empty()) d.test = load_split(c.paths.test, d.labels, d.vocab, opts);
  log::info("loaded " + std::to_string(d.train.size()) + " train / " + std::to_string(d.val.size()) +
            " val / " + std::to_string(d.test.size()) + " test examples, " +
            std::to_string(d.labels.size()) + " labels, vocabulary " + std::to_string(d.vocab.size()));
  return d;
}

/// Graph from training (plus validation when configured) co-occurrences.
inline EmotionGraph graph_from_data(const RunConfig& c, const TrainingData& d) {
  std::vector<Example> pool = d.train;
  if (c.use_val_for_graph) pool.insert(pool.end(), d.val.begin(), d.val.end());
  return build_graph(count_cooccurrence(pool, d.labels.size()), d.labels, c.mu, c.w);
}

inline EmotionGraph read_graph_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph " + path.string());
  try {
    return graph_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": malformed graph JSON (" + e.what() + ")");
  }
}

// ---------------------------------------------------------------------------
// build-graph

inline EmotionGraph cmd_build_graph(const RunConfig& c, std::ostream& os) {
  const TrainingData d = load_data(c);
  std::vector<Example> pool = d.train;
  if (c.use_val_for_graph) pool.insert(pool.end(), d.val.begin(), d.val.end());
  const auto counts = count_cooccurrence(pool, d.labels.size());
  EmotionGraph g = build_graph(counts, d.labels, c.mu, c.w);

  const auto json_path = c.paths.out / "graph.json";
  const auto dot_path = c.paths.out / "graph.dot";
  write_text(json_path, export_json(g) + "\n");
  write_text(dot_path, export_dot(g));
  write_manifest(c, "build-graph", {json_path, dot_path});

  os << "emotion graph: " << g.size() << " nodes, mu=" << g.mu << ", w=" << g.w << " ("
     << pool.size() << " examples)\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-16s %8s %6s %6s\n", "emotion", "count", "out", "in");
  os << buf;
  for (std::size_t i = 0; i < g.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%-16s %8llu %6zu %6zu\n", g.labels.name(i).c_str(),
                  static_cast<unsigned long long>(counts(i, i)), out_degree(g, i), in_degree(g, i));
    os << buf;
  }
  os << "wrote " << json_path.string() << " and " << dot_path.string() << "\n";
  return g;
}

// ---------------------------------------------------------------------------
// train

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainResult result;
  EvalReport final_report;  // best model on the selection split
  fs::path checkpoint_path;
};

inline TrainOutcome train_from_config(const RunConfig& c, bool write_artifacts, std::ostream& os,
                                      bool force_rebuild_graph = false) {
  std::optional<EmotionGraph> stored;
  if (!c.paths.graph.empty() && !force_rebuild_graph) {
    stored = read_graph_file(c.paths.graph);
    log::info("using graph " + c.paths.graph.string() + " (its mu/w override the config)");
  }
  const TrainingData d = load_data(c, stored ? std::optional<LabelSpace>(stored->labels) : std::nullopt);
  EmotionGraph graph = stored ? *stored : graph_from_data(c, d);

  TrainOptions opts = c.optim;
  if (c.mode == TaskMode::kSingleLabel) opts.keep = subgraph(graph, c.keep_names, c.aliases);

  ModelConfig mc{c.encoder, c.head, d.vocab.size(), graph.size()};
  Model model = Model::create(mc, graph, c.seed);
  log::info("model: " + to_string(c.encoder.kind) + "+" + to_string(c.head.kind) + ", " +
            std::to_string(model.params().scalar_count()) + " parameters");

  std::ofstream log_file;
  fs::path log_path = c.paths.out / "train_log.jsonl";
  if (write_artifacts) {
    fs::create_directories(c.paths.out);
    log_file.open(log_path);
    if (!log_file) throw IoError("cannot write " + log_path.string());
  }
  auto on_epoch = [&](const EpochLog& e) {
    if (log_file) log_file << to_json(e).dump() << "\n" << std::flush;
    std::ostringstream msg;
    msg << "epoch " << e.epoch << " loss=" << e.train_loss << " val_jaccard=" << e.val_jaccard;
    log::debug(msg.str());
  };
  TrainResult result = train(model, d.train, d.val, opts, on_epoch);

  TrainOutcome out;
  out.checkpoint = Checkpoint{result.model, d.vocab, c.mode, opts.keep, c.optim.threshold};
  const auto& select = d.val.empty() ? d.train : d.val;
  const auto preds = predict_rows(result.model, select, opts);
  std::vector<LabelRow> golds;
  for (const auto& ex : select) golds.push_back(ex.labels);
  out.final_report = evaluate(preds, golds, graph.labels);
  out.result = std::move(result);

  if (write_artifacts) {
    out.checkpoint_path = c.paths.out / "checkpoint.bin";
    save_checkpoint(out.checkpoint, out.checkpoint_path);
    const auto graph_path = c.paths.out / "graph.json";
    write_text(graph_path, export_json(graph) + "\n");
    write_manifest(c, "train", {out.checkpoint_path, log_path, graph_path});
  }
  os << "trained " << out.result.log.size() << " epochs; best epoch " << out.result.best_epoch
     << " (" << (d.val.empty() ? "train" : "val") << " jaccard " << out.result.best_val_jaccard
     << ")\n";
  if (write_artifacts) os << "wrote " << out.checkpoint_path.string() << "\n";
  return out;
}

inline TrainOutcome cmd_train(const RunConfig& c, std::ostream& os) {
  return train_from_config(c, true, os);
}

// ---------------------------------------------------------------------------
// eval

/// Evaluates a checkpoint on a corpus. Single-label mode uses `keep_names`
/// when non-empty, else the checkpoint's kept labels.
inline nlohmann::json evaluate_checkpoint(const Checkpoint& ck, const fs::path& corpus_path,
                                          TaskMode mode, const std::vector<std::string>& keep_names,
                                          const std::map<std::string, std::string>& aliases,
                                          std::size_t min_support, double threshold,
                                          std::ostream& os) {
  const auto& labels = ck.model.labels();
  const auto records = read_jsonl(corpus_path);
  if (records.empty()) throw FormatError(corpus_path.string() + ": no examples");
  std::set<std::string> unknown;
  for (const auto& r : records)
    for (const auto& l : r.labels) {
      auto it = aliases.find(l);
      const auto& canon = it == aliases.end() ? l : it->second;
      if (!labels.find(canon)) unknown.insert(l);
    }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& u : unknown) list += (list.empty() ? "" : ", ") + u;
    throw FormatError("label-space mismatch: corpus labels not in checkpoint: [" + list + "]");
  }
  CorpusOptions opts;
  opts.max_len = ck.model.config().encoder.max_len;
  opts.aliases = aliases;
  const auto examples = encode_records(records, labels, ck.vocab, opts, corpus_path.string());

  if (mode == TaskMode::kMultiLabel) {
    TrainOptions to;
    to.threshold = threshold;
    const auto preds = predict_rows(ck.model, examples, to);
    std::vector<LabelRow> golds;
    for (const auto& e : examples) golds.push_back(e.labels);
    const auto rep = evaluate(preds, golds, labels);
    os << render_table(rep);
    return to_json(rep);
  }
  std::vector<std::size_t> keep = ck.keep;
  if (!keep_names.empty()) {
    keep.clear();
    for (const auto& n : keep_names) {
      auto it = aliases.find(n);
      keep.push_back(labels.index(it == aliases.end() ? n : it->second));
    }
  }
  if (keep.size() < 2) throw ConfigError("eval: single-label mode needs at least 2 kept labels");
  std::vector<std::size_t> preds, golds;
  for (const auto& e : examples) {
    golds.push_back(gold_index(e.labels, keep));
    preds.push_back(decide_single(ck.model.forward(e.tokens).row_span(0), keep));
  }
  const auto rep = single_label_report(preds, golds, keep, labels, min_support);
  os << render_table(rep);
  return to_json(rep);
}

inline nlohmann::json cmd_eval(const RunConfig& c, const fs::path& checkpoint,
                               const fs::path& corpus, std::optional<TaskMode> mode,
                               std::ostream& os) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  fs::path data = corpus.empty() ? c.paths.test : corpus;
  if (data.empty()) throw ConfigError("eval: no corpus given (--corpus or paths.test)");
  const TaskMode m = mode.value_or(ck.mode);
  const auto keep_names = m == TaskMode::kSingleLabel && ck.mode == TaskMode::kMultiLabel
                              ? c.keep_names
                              : std::vector<std::string>{};
  const auto report =
      evaluate_checkpoint(ck, data, m, keep_names, c.aliases, c.min_support, ck.threshold, os);
  const auto path = c.paths.out / "report.json";
  write_text(path, report.dump(2) + "\n");
  write_manifest(c, "eval", {path});
  return report;
}

// ---------------------------------------------------------------------------
// sweep

struct SweepRow {
  double value = 0.0;
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
  std::string error;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Shortest text that parses back to `v`; used for directory names.
inline std::string short_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = "value,accuracy,micro_f1,macro_f1,error\n";
  for (const auto& r : rows) {
    out += format_double(r.value) + "," + format_double(r.accuracy) + "," +
           format_double(r.micro_f1) + "," + format_double(r.macro_f1) + "," +
           csv_escape(r.error) + "\n";
  }
  return out;
}

/// One model per value of `param` (mu or w), all with the config's seed.
/// Evaluation uses the test split, else validation, else training.
inline std::vector<SweepRow> cmd_sweep(const RunConfig& c, const std::string& param,
                                       const std::vector<double>& values, std::size_t jobs,
                                       std::ostream& os) {
  if (param != "mu" && param != "w") throw ConfigError("sweep: --param must be mu or w");
  if (values.size() < 2) throw ConfigError("sweep: need at least 2 values");
  if (!c.paths.graph.empty()) log::info("sweep rebuilds the graph per value; paths.graph ignored");
  std::vector<SweepRow> rows(values.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < values.size(); i = next++) {
      SweepRow& row = rows[i];
      row.value = values[i];
      try {
        RunConfig rc = c;
        (param == "mu" ? rc.mu : rc.w) = values[i];
        param == "mu" ? check_mu(values[i]) : check_w(values[i]);
        rc.paths.out = c.paths.out / (param + "=" + short_double(values[i]));
        rc.resolved["graph"][param] = values[i];
        std::ostringstream sink;
        auto outcome = train_from_config(rc, true, sink, true);
        const auto& ck = outcome.checkpoint;
        const fs::path eval_on = !c.paths.test.empty() ? c.paths.test
                                 : !c.paths.val.empty() ? c.paths.val
                                                        : c.paths.train;
        const auto rep = evaluate_checkpoint(ck, eval_on, ck.mode, {}, c.aliases, c.min_support,
                                             ck.threshold, sink);
        if (ck.mode == TaskMode::kMultiLabel) {
          row.accuracy = rep.at("jaccard_accuracy").get<double>();
          row.micro_f1 = rep.at("micro_f1").get<double>();
          row.macro_f1 = rep.at("macro_f1").get<double>();
        } else {
          // Single-label: exact match equals micro-F1 over one label per example.
          row.accuracy = rep.at("accuracy").get<double>();
          row.micro_f1 = row.accuracy;
          row.macro_f1 = rep.at("macro_f1").get<double>();
        }
        write_text(rc.paths.out / "report.json", rep.dump(2) + "\n");
      } catch (const std::exception& e) {
        row.error = e.what();
        log::error(param + "=" + short_double(values[i]) + ": " + e.what());
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, values.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const auto csv_path = c.paths.out / "sweep.csv";
  const std::string csv = sweep_csv(rows);
  write_text(csv_path, csv);
  write_manifest(c, "sweep", {csv_path});
  os << csv;
  return rows;
}

inline std::vector<SweepRow> read_sweep_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SweepRow> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted) {
        if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (ch == '"') {
          quoted = false;
        } else {
          cur += ch;
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    cells.push_back(cur);
    if (cells.size() != 5) throw FormatError(path.string() + ": malformed sweep row");
    rows.push_back({std::stod(cells[0]), std::stod(cells[1]), std::stod(cells[2]),
                    std::stod(cells[3]), cells[4]});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// predict

/// One JSON object per input line, in input order.
inline std::vector<nlohmann::json> cmd_predict(const Checkpoint& ck,
                                               const std::vector<std::string>& lines,
                                               std::optional<double> threshold, std::ostream& os) {
  const double thr = threshold.value_or(ck.threshold);
  if (!(thr >= 0.0 && thr <= 1.0)) throw ConfigError("predict: threshold outside [0,1]");
  const std::size_t max_len = ck.model.config().encoder.max_len;
  std::vector<nlohmann::json> out;
  for (const auto& text : lines) {
    nlohmann::json j;
    j["text"] = text;
    const auto ids = encode_text(text, ck.vocab, max_len);
    if (ids.empty()) {
      j["error"] = "empty after preprocessing";
    } else {
      const auto p = predict(ck.model, ids, ck.mode, ck.keep, thr);
      j["labels"] = p.labels;
      nlohmann::json probs = nlohmann::json::object();
      for (std::size_t i = 0; i < p.probabilities.size(); ++i) {
        probs[ck.model.labels().name(i)] = p.probabilities[i];
      }
      j["probabilities"] = probs;
    }
    os << j.dump() << "\n";
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace emograph::cli
