#include "intentkg/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "intentkg/errors.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

const double* IntentEmbeddingTable::row_for(NodeId id) const {
  auto it = std::lower_bound(intent_order.begin(), intent_order.end(), id);
  if (it == intent_order.end() || *it != id) return nullptr;
  return vectors.row(static_cast<int>(it - intent_order.begin()));
}

std::vector<double> IntentEmbeddingTable::vector_for(NodeId id) const {
  const double* r = row_for(id);
  if (!r) throw LookupError("embedding table: unknown intent " + std::to_string(id));
  return std::vector<double>(r, r + vectors.cols());
}

Mat normalized_adjacency(const ConceptGraph& graph, const std::set<EdgeKind>& kinds) {
  std::vector<NodeId> intents = graph.nodes_of_kind(NodeKind::Intent);
  if (intents.empty()) throw LookupError("normalized_adjacency: graph has no Intent nodes");
  std::map<NodeId, int> pos;
  for (size_t i = 0; i < intents.size(); ++i) pos[intents[i]] = static_cast<int>(i);

  const int n = static_cast<int>(intents.size());
  Mat a(n, n);
  for (const Edge& e : graph.edges()) {
    if (!kinds.count(e.kind)) continue;
    auto si = pos.find(e.src);
    auto di = pos.find(e.dst);
    if (si == pos.end() || di == pos.end()) continue;
    if (si->second == di->second) continue;
    a.at(si->second, di->second) = 1.0;
    a.at(di->second, si->second) = 1.0;
  }
  for (int i = 0; i < n; ++i) a.at(i, i) = 1.0;  // self-loops

  std::vector<double> inv_sqrt_deg(n);
  for (int i = 0; i < n; ++i) {
    double deg = 0.0;
    for (int j = 0; j < n; ++j) deg += a.at(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      a.at(i, j) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
  }
  return a;
}

Mat gcn_forward(const Mat& adj, const Mat& features, const std::vector<Mat>& weights) {
  if (adj.rows() != adj.cols()) throw DimensionError("gcn_forward: adjacency must be square");
  if (features.rows() != adj.rows()) {
    throw DimensionError("gcn_forward: features rows != adjacency size");
  }
  Mat h = features;
  for (size_t l = 0; l < weights.size(); ++l) {
    if (h.cols() != weights[l].rows()) {
      throw DimensionError("gcn_forward: shape mismatch at layer " + std::to_string(l) + " (" +
                           std::to_string(h.cols()) + " vs " +
                           std::to_string(weights[l].rows()) + ")");
    }
    Mat hw = matmul(h, weights[l]);  // row-local, permutation-safe as-is
    h = matmul_exact(adj, hw);       // neighbor aggregation, exact accumulation
    if (l + 1 < weights.size()) {
      for (double& v : h.data()) {
        if (v < 0.0) v = 0.0;
      }
    }
  }
  return h;
}

Mat glorot_uniform(int rows, int cols, Rng& rng) {
  Mat m(rows, cols);
  double limit = std::sqrt(6.0 / (rows + cols));
  for (double& v : m.data()) v = (2.0 * rng.next_double() - 1.0) * limit;
  return m;
}

IntentEmbeddingTable build_intent_embeddings(const ConceptGraph& graph,
                                             const TextEncoder& encoder,
                                             const GcnConfig& config) {
  Mat adj = normalized_adjacency(graph);
  std::vector<NodeId> intents = graph.nodes_of_kind(NodeKind::Intent);
  std::vector<std::string> labels;
  labels.reserve(intents.size());
  for (NodeId id : intents) labels.push_back(graph.node(id).label);
  Mat features = encoder.encode_rows(labels);

  Rng rng(config.seed);
  std::vector<Mat> weights;
  int in_dim = features.cols();
  for (int l = 0; l < config.layers; ++l) {
    int out = (l + 1 == config.layers) ? config.out_dim : config.hidden_dim;
    weights.push_back(glorot_uniform(in_dim, out, rng));
    in_dim = out;
  }

  IntentEmbeddingTable table;
  table.intent_order = intents;
  table.vectors = gcn_forward(adj, features, weights);
  table.layers = config.layers;
  table.graph_fingerprint = graph.fingerprint();
  return table;
}

std::string serialize_embedding_table(const IntentEmbeddingTable& table) {
  std::ostringstream os;
  os << "dim=" << table.vectors.cols() << "\n";
  for (size_t i = 0; i < table.intent_order.size(); ++i) {
    os << table.intent_order[i];
    for (int j = 0; j < table.vectors.cols(); ++j) {
      os << "\t" << format_double(table.vectors.at(static_cast<int>(i), j));
    }
    os << "\n";
  }
  return os.str();
}

IntentEmbeddingTable parse_embedding_table(const std::string& content) {
  std::istringstream is(content);
  std::string line;
  if (!std::getline(is, line) || line.rfind("dim=", 0) != 0) {
    throw ParseError("embedding table must start with dim=<d>", 1);
  }
  int dim = std::stoi(line.substr(4));
  IntentEmbeddingTable table;
  std::vector<std::vector<double>> rows;
  size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    NodeId id;
    ls >> id;
    std::vector<double> v(dim);
    for (int j = 0; j < dim; ++j) {
      if (!(ls >> v[j])) throw ParseError("short embedding row", line_no);
    }
    table.intent_order.push_back(id);
    rows.push_back(std::move(v));
  }
  table.vectors = Mat(static_cast<int>(rows.size()), dim);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < dim; ++j) table.vectors.at(static_cast<int>(i), j) = rows[i][j];
  }
  return table;
}

void save_embedding_table(const IntentEmbeddingTable& table, const std::string& path) {
  write_text_file(path, serialize_embedding_table(table));
}

IntentEmbeddingTable load_embedding_table(const std::string& path) {
  return parse_embedding_table(read_text_file(path));
}

}  // namespace intentkg
