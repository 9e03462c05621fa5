#pragma once

// Emotion graph construction from label co-occurrence counts:
//
//   G1[i][j] = M[i][j] / M[i][i]                (zero row when M[i][i] = 0)
//   G2[i][j] = 1 if G1[i][j] >= mu else 0
//   G[i][j]  = G2[i][j] / sum_{k != i} G2[i][k] for i != j (0 if that sum is 0)
//   G[i][i]  = 1 - w
//   G~       = D^-1/2 G D^-1/2,  D[i][i] = sum_j G[i][j]
//
// The reweighting sum excludes the diagonal so every non-isolated row's
// off-diagonal weights sum to exactly 1. No extra self-loop is added before
// degree normalization: the diagonal already carries 1 - w > 0.

#include <cmath>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "corpus.hpp"
#include "errors.hpp"
#include "tensor.hpp"

namespace emograph {

struct EmotionGraph {
  LabelSpace labels;
  double mu = 0.0;
  double w = 0.0;
  Tensor g1;
  Tensor g2;
  Tensor g;
  Tensor g_tilde;

  std::size_t size() const noexcept { return labels.size(); }
};

inline void check_mu(double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw ConfigError("mu=" + std::to_string(mu) + " outside [0,1]");
}

inline void check_w(double w) {
  if (!(w >= 0.0 && w < 1.0)) throw ConfigError("w=" + std::to_string(w) + " outside [0,1)");
}

inline Tensor normalize_asymmetric(const CooccurrenceMatrix& m) {
  const std::size_t n = m.size();
  Tensor g1(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto diag = m(i, i);
    if (diag == 0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      g1(i, j) = static_cast<double>(m(i, j)) / static_cast<double>(diag);
    }
  }
  return g1;
}

inline Tensor binarize(const Tensor& g1, double mu) {
  check_mu(mu);
  Tensor g2(g1.shape(), 0.0);
  for (std::size_t k = 0; k < g1.size(); ++k) g2[k] = g1[k] >= mu ? 1.0 : 0.0;
  return g2;
}

inline Tensor reweight(const Tensor& g2, double w) {
  check_w(w);
  const std::size_t n = g2.rows();
  Tensor g(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) off += g2(i, j);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) {
        g(i, j) = 1.0 - w;
      } else if (off > 0.0) {
        g(i, j) = g2(i, j) / off;
      }
    }
  }
  return g;
}

inline Tensor gcn_normalize(const Tensor& g) {
  const std::size_t n = g.rows();
  if (g.cols() != n) throw DimensionError("gcn_normalize: non-square " + g.shape().str());
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (g(i, j) < 0.0) throw ContractError("gcn_normalize: negative entry");
      d += g(i, j);
    }
    if (d <= 0.0) throw ContractError("gcn_normalize: row " + std::to_string(i) + " has zero degree");
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  Tensor out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = inv_sqrt[i] * g(i, j) * inv_sqrt[j];
  return out;
}

inline EmotionGraph build_graph(const CooccurrenceMatrix& m, const LabelSpace& labels, double mu,
                                double w) {
  if (m.size() != labels.size()) {
    throw DimensionError("build_graph: " + std::to_string(m.size()) + "x" +
                         std::to_string(m.size()) + " counts for " +
                         std::to_string(labels.size()) + " labels");
  }
  check_mu(mu);
  check_w(w);
  EmotionGraph out;
  out.labels = labels;
  out.mu = mu;
  out.w = w;
  out.g1 = normalize_asymmetric(m);
  out.g2 = binarize(out.g1, mu);
  out.g = reweight(out.g2, w);
  out.g_tilde = gcn_normalize(out.g);
  return out;
}

/// Positions of `keep` in the graph's label space, after alias resolution.
/// The graph itself is untouched: subset training only changes which
/// classifiers the loss and decision rule look at.
inline std::vector<std::size_t> subgraph(const EmotionGraph& graph,
                                         const std::vector<std::string>& keep,
                                         const std::map<std::string, std::string>& aliases = {}) {
  std::vector<std::size_t> idx;
  idx.reserve(keep.size());
  for (const auto& name : keep) {
    auto it = aliases.find(name);
    const std::string& canonical = it == aliases.end() ? name : it->second;
    auto pos = graph.labels.find(canonical);
    if (!pos) throw ContractError("subgraph: unknown label '" + name + "'");
    if (std::find(idx.begin(), idx.end(), *pos) != idx.end()) {
      throw ContractError("subgraph: label '" + name + "' listed twice");
    }
    idx.push_back(*pos);
  }
  return idx;
}

/// Directed degree of node i in G2, self excluded.
inline std::size_t out_degree(const EmotionGraph& graph, std::size_t i) {
  std::size_t d = 0;
  for (std::size_t j = 0; j < graph.size(); ++j)
    if (j != i && graph.g2(i, j) != 0.0) ++d;
  return d;
}

inline std::size_t in_degree(const EmotionGraph& graph, std::size_t j) {
  std::size_t d = 0;
  for (std::size_t i = 0; i < graph.size(); ++i)
    if (i != j && graph.g2(i, j) != 0.0) ++d;
  return d;
}

// ---------------------------------------------------------------------------
// Export

namespace detail {

inline nlohmann::json matrix_json(const Tensor& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) {
    auto r = t.row_span(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

inline Tensor matrix_from_json(const nlohmann::json& j, std::size_t n, const char* field) {
  if (!j.is_array() || j.size() != n) {
    throw FormatError(std::string("graph JSON: '") + field + "' must be " + std::to_string(n) +
                      " rows");
  }
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!j[i].is_array() || j[i].size() != n) {
      throw FormatError(std::string("graph JSON: '") + field + "' row " + std::to_string(i) +
                        " must have " + std::to_string(n) + " entries");
    }
    for (std::size_t k = 0; k < n; ++k) t(i, k) = j[i][k].get<double>();
  }
  return t;
}

inline std::string dot_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

}  // namespace detail

/// Doubles are written with 17 significant digits, so reading the JSON back
/// reproduces every matrix bit for bit.
inline nlohmann::json graph_to_json(const EmotionGraph& graph) {
  return {{"labels", graph.labels.names()},
          {"mu", graph.mu},
          {"w", graph.w},
          {"g1", detail::matrix_json(graph.g1)},
          {"g2", detail::matrix_json(graph.g2)},
          {"g", detail::matrix_json(graph.g)},
          {"g_tilde", detail::matrix_json(graph.g_tilde)}};
}

inline EmotionGraph graph_from_json(const nlohmann::json& j) {
  try {
    EmotionGraph g;
    g.labels = LabelSpace(j.at("labels").get<std::vector<std::string>>());
    g.mu = j.at("mu").get<double>();
    g.w = j.at("w").get<double>();
    check_mu(g.mu);
    check_w(g.w);
    const std::size_t n = g.labels.size();
    g.g1 = detail::matrix_from_json(j.at("g1"), n, "g1");
    g.g2 = detail::matrix_from_json(j.at("g2"), n, "g2");
    g.g = detail::matrix_from_json(j.at("g"), n, "g");
    g.g_tilde = detail::matrix_from_json(j.at("g_tilde"), n, "g_tilde");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("graph JSON: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("graph JSON: ") + e.what());
  }
}

inline std::string export_json(const EmotionGraph& graph) { return graph_to_json(graph).dump(2); }

/// Graphviz digraph: one edge i -> j per nonzero off-diagonal G2[i][j],
/// labeled with the conditional frequency G1[i][j].
inline std::string export_dot(const EmotionGraph& graph) {
  std::ostringstream os;
  os << "digraph emotions {\n";
  os << "  // mu=" << graph.mu << " w=" << graph.w << "\n";
  os << "  node [shape=ellipse];\n";
  for (const auto& name : graph.labels.names()) os << "  " << detail::dot_quote(name) << ";\n";
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (std::size_t j = 0; j < graph.size(); ++j) {
      if (i == j || graph.g2(i, j) == 0.0) continue;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", graph.g1(i, j));
      os << "  " << detail::dot_quote(graph.labels.name(i)) << " -> "
         << detail::dot_quote(graph.labels.name(j)) << " [label=\"" << buf << "\"];\n";
    }
  }
  os << "}\n";
  return os.str();
}

}  // namespace emograph
