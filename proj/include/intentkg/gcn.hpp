#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "intentkg/graph.hpp"
#include "intentkg/matrix.hpp"
#include "intentkg/text.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

// GCN vectors for every Intent node, in the frozen ordering (sorted ids).
struct IntentEmbeddingTable {
  std::vector<NodeId> intent_order;  // sorted node ids
  Mat vectors;                       // one row per intent_order entry
  int layers = 0;
  uint64_t graph_fingerprint = 0;

  int dim() const { return vectors.cols(); }
  const double* row_for(NodeId id) const;  // nullptr if absent
  std::vector<double> vector_for(NodeId id) const;
};

// Symmetric D^{-1/2}(A+I)D^{-1/2} over Intent nodes using the requested edge
// kinds (direction ignored, multi-edges collapse). Rows follow sorted ids.
Mat normalized_adjacency(const ConceptGraph& graph,
                         const std::set<EdgeKind>& kinds = {EdgeKind::IsA,
                                                            EdgeKind::Consequent});

// H^{l+1} = relu(adj * H^l * W^l), last layer linear. Aggregation uses
// order-independent accumulation, so relabeling nodes permutes output rows
// bit-exactly.
Mat gcn_forward(const Mat& adj, const Mat& features, const std::vector<Mat>& weights);

struct GcnConfig {
  int hidden_dim = 64;
  int out_dim = 64;
  int layers = 2;
  uint64_t seed = 7;
};

// Full pipeline: features = encode_text of intent labels, seeded
// Glorot-uniform weights, forward pass.
IntentEmbeddingTable build_intent_embeddings(const ConceptGraph& graph,
                                             const TextEncoder& encoder,
                                             const GcnConfig& config);

Mat glorot_uniform(int rows, int cols, Rng& rng);

std::string serialize_embedding_table(const IntentEmbeddingTable& table);
IntentEmbeddingTable parse_embedding_table(const std::string& content);
void save_embedding_table(const IntentEmbeddingTable& table, const std::string& path);
IntentEmbeddingTable load_embedding_table(const std::string& path);

}  // namespace intentkg
