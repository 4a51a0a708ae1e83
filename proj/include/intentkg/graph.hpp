#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "intentkg/errors.hpp"

namespace intentkg {

using NodeId = uint32_t;
constexpr NodeId kNoNode = UINT32_MAX;

enum class NodeKind : uint8_t { Intent = 0, Function = 1, Product = 2, Sememe = 3 };
enum class EdgeKind : uint8_t { IsA = 0, Consequent = 1, Consist = 2, Has = 3 };
enum class Provenance : uint8_t { Lexical = 0, Embedding = 1, Bayesian = 2, Manual = 3, Generated = 4 };

std::string_view to_string(NodeKind k);
std::string_view to_string(EdgeKind k);
std::string_view to_string(Provenance p);
NodeKind node_kind_from_string(std::string_view s);
EdgeKind edge_kind_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);

struct Node {
  NodeId id = kNoNode;
  NodeKind kind = NodeKind::Intent;
  std::string label;  // canonical form
  std::set<std::string> aliases;
  std::map<std::string, std::string> attrs;
};

struct Edge {
  NodeId src = kNoNode;
  NodeId dst = kNoNode;
  EdgeKind kind = EdgeKind::IsA;
  double confidence = 1.0;
  Provenance provenance = Provenance::Manual;
};

struct ValidationFinding {
  std::string code;  // DANGLING_EDGE | ISA_CYCLE | SCHEMA_VIOLATION | SELF_LOOP
  std::string detail;
};

struct ValidationReport {
  std::vector<ValidationFinding> findings;   // invariant violations
  std::vector<ValidationFinding> warnings;   // advisory only (e.g. MISSING_CONSIST)
  bool ok() const { return findings.empty(); }
};

// The relation schema: which (src kind, dst kind) pairs an edge kind admits.
bool schema_admits(EdgeKind kind, NodeKind src, NodeKind dst);

// Typed in-memory concept graph. Build single-threaded, then freeze();
// a frozen graph is immutable and safe to share across readers.
class ConceptGraph {
 public:
  // Idempotent upsert keyed on (kind, canonical label); aliases merge.
  NodeId add_node(NodeKind kind, std::string_view label,
                  const std::set<std::string>& aliases = {});

  // Stores the edge iff the schema admits the endpoint kinds and, for isA,
  // no cycle results. Re-adding an existing (src, kind, dst) updates the
  // confidence and provenance in place.
  size_t add_edge(NodeId src, EdgeKind kind, NodeId dst, double confidence = 1.0,
                  Provenance provenance = Provenance::Manual);

  void set_attr(NodeId id, const std::string& key, const std::string& value);

  ValidationReport validate() const;

  // All simple paths along Consequent edges from start, at most max_depth
  // edges long, ordered by (length, descending confidence product). Paths
  // include the start node.
  std::vector<std::vector<NodeId>> consequent_chains(NodeId start, int max_depth) const;

  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

  const Node* find(NodeId id) const;
  const Node& node(NodeId id) const;
  NodeId find_by_label(NodeKind kind, std::string_view label) const;  // kNoNode if absent
  size_t node_count() const { return nodes_.size(); }
  size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }

  std::vector<NodeId> node_ids_sorted() const;
  std::vector<NodeId> nodes_of_kind(NodeKind kind) const;  // sorted by id
  std::vector<const Edge*> out_edges(NodeId src, std::optional<EdgeKind> kind = {}) const;
  std::vector<const Edge*> in_edges(NodeId dst, std::optional<EdgeKind> kind = {}) const;

  // Neighbors one Consist hop away with the requested node kind.
  std::vector<NodeId> consist_targets(NodeId intent, NodeKind kind) const;

  bool structurally_equal(const ConceptGraph& other) const;
  uint64_t fingerprint() const;

  // Used by the loader to reproduce persisted ids exactly.
  void insert_node_with_id(NodeId id, NodeKind kind, std::string_view label,
                           const std::set<std::string>& aliases,
                           const std::map<std::string, std::string>& attrs);

 private:
  void require_mutable() const;
  // Returns the cycle path (src..dst..src) if inserting src-isA->dst would
  // close one, otherwise empty.
  std::vector<NodeId> isa_cycle_path(NodeId src, NodeId dst) const;

  std::map<NodeId, Node> nodes_;
  std::vector<Edge> edges_;
  std::map<std::pair<uint8_t, std::string>, NodeId> label_index_;
  std::map<std::pair<NodeId, uint8_t>, std::vector<size_t>> out_index_;
  std::map<std::pair<NodeId, uint8_t>, std::vector<size_t>> in_index_;
  std::map<std::tuple<NodeId, uint8_t, NodeId>, size_t> edge_index_;
  NodeId next_id_ = 0;
  bool frozen_ = false;
};

// Line-delimited JSON persistence. Node records precede edge records.
void save_graph(const ConceptGraph& graph, const std::string& path);
std::string serialize_graph(const ConceptGraph& graph);
ConceptGraph load_graph(const std::string& path);
ConceptGraph parse_graph(const std::string& content);

}  // namespace intentkg
