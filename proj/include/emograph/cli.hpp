#pragma once

// Argument parsing and exit-code mapping for the `emograph` tool.
//
// Exit codes: 0 success, 1 usage/config/contract error, 2 I/O or format
// error, 3 training divergence.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "commands.hpp"

namespace emograph::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kDivergence = 3 };

struct CommonFlags {
  std::string config;
  std::string preset;
  std::optional<double> mu, w, threshold;
  std::optional<std::uint64_t> seed;
  std::string out, train, val, test, labels, graph;
};

inline void add_common(CLI::App* sub, CommonFlags& f) {
  sub->add_option("--config", f.config, "JSON run configuration");
  sub->add_option("--preset", f.preset, "built-in preset (semeval-gcn, semeval-gat, twitter, iemocap-transfer)");
  sub->add_option("--mu", f.mu, "co-occurrence threshold in [0,1]");
  sub->add_option("--w", f.w, "self-loop complement in [0,1)");
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--threshold", f.threshold, "decision threshold in [0,1]");
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--train", f.train, "training corpus (JSONL)");
  sub->add_option("--val", f.val, "validation corpus (JSONL)");
  sub->add_option("--test", f.test, "test corpus (JSONL)");
  sub->add_option("--labels", f.labels, "label list, one per line");
  sub->add_option("--graph", f.graph, "precomputed graph.json");
}

/// Command-line values as a merge patch over the config file. Paths are
/// made absolute against the working directory so they do not resolve
/// relative to the config file.
inline nlohmann::json overrides_from(const CommonFlags& f) {
  nlohmann::json o = nlohmann::json::object();
  auto abs = [](const std::string& p) { return std::filesystem::absolute(p).lexically_normal().string(); };
  if (!f.preset.empty()) o["preset"] = f.preset;
  if (f.mu) o["graph"]["mu"] = *f.mu;
  if (f.w) o["graph"]["w"] = *f.w;
  if (f.seed) o["seed"] = *f.seed;
  if (f.threshold) o["threshold"] = *f.threshold;
  const std::pair<const char*, const std::string*> paths[] = {
      {"out", &f.out},     {"train", &f.train},   {"val", &f.val},
      {"test", &f.test},   {"labels", &f.labels}, {"graph", &f.graph}};
  for (const auto& [key, value] : paths)
    if (!value->empty()) o["paths"][key] = abs(*value);
  return o;
}

inline RunConfig config_for(const CommonFlags& f) {
  auto overrides = overrides_from(f);
  if (f.config.empty() && !overrides.contains("paths")) overrides["paths"] = nlohmann::json::object();
  if (f.config.empty() && !overrides["paths"].contains("out")) {
    overrides["paths"]["out"] = std::filesystem::absolute("out").string();
  }
  return load_config(f.config, overrides);
}

inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

/// Parses and dispatches. Output goes to `out`, diagnostics to `err`;
/// `predict` reads `in` when no --input file is given.
inline int run(int argc, const char* const* argv, std::istream& in, std::ostream& out,
               std::ostream& err) {
  CLI::App app{"Emotion-graph multi-label emotion classifier"};
  app.require_subcommand(1);

  CommonFlags bg, tr, ev, sw;
  auto* build = app.add_subcommand("build-graph", "build the emotion graph from a training corpus");
  add_common(build, bg);

  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint");
  add_common(train_cmd, tr);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  add_common(eval, ev);
  std::string eval_ckpt, eval_corpus, eval_mode;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--corpus", eval_corpus, "corpus to score (defaults to paths.test)");
  eval->add_option("--mode", eval_mode, "multilabel or singlelabel")
      ->check(CLI::IsMember({"multilabel", "singlelabel"}));

  auto* sweep = app.add_subcommand("sweep", "train one model per value of mu or w");
  add_common(sweep, sw);
  std::string sweep_param;
  std::vector<double> sweep_values;
  std::size_t jobs = 1;
  sweep->add_option("--param", sweep_param, "mu or w")->required()->check(CLI::IsMember({"mu", "w"}));
  sweep->add_option("--values", sweep_values, "values to try")->required()->expected(1, -1);
  sweep->add_option("--jobs", jobs, "parallel training runs")->check(CLI::PositiveNumber);

  auto* pred = app.add_subcommand("predict", "predict emotions for lines of text");
  std::string pred_ckpt, pred_input;
  std::optional<double> pred_threshold;
  pred->add_option("--checkpoint", pred_ckpt, "checkpoint file")->required();
  pred->add_option("--input", pred_input, "text file, one example per line (default stdin)");
  pred->add_option("--threshold", pred_threshold, "decision threshold in [0,1]");

  auto* dot = app.add_subcommand("export-dot", "render a graph.json as Graphviz DOT");
  std::string dot_graph, dot_output;
  dot->add_option("--graph", dot_graph, "graph.json")->required();
  dot->add_option("--output", dot_output, "DOT file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (app.get_subcommands().empty()) err << app.help();
    return kUsage;
  }

  try {
    if (*build) {
      cmd_build_graph(config_for(bg), out);
    } else if (*train_cmd) {
      cmd_train(config_for(tr), out);
    } else if (*eval) {
      std::optional<TaskMode> mode;
      if (eval_mode == "multilabel") mode = TaskMode::kMultiLabel;
      if (eval_mode == "singlelabel") mode = TaskMode::kSingleLabel;
      const fs::path corpus = eval_corpus.empty() ? fs::path{} : fs::absolute(eval_corpus);
      cmd_eval(config_for(ev), fs::absolute(eval_ckpt), corpus, mode, out);
    } else if (*sweep) {
      cmd_sweep(config_for(sw), sweep_param, sweep_values, jobs, out);
    } else if (*pred) {
      const Checkpoint ck = load_checkpoint(pred_ckpt);
      std::vector<std::string> lines;
      if (pred_input.empty() || pred_input == "-") {
        lines = read_lines(in);
      } else {
        std::ifstream file(pred_input);
        if (!file) throw IoError("cannot open " + pred_input);
        lines = read_lines(file);
      }
      cmd_predict(ck, lines, pred_threshold, out);
    } else if (*dot) {
      const std::string text = export_dot(read_graph_file(dot_graph));
      if (dot_output.empty()) {
        out << text;
      } else {
        write_text(dot_output, text);
      }
    }
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}

}  // namespace emograph::cli
