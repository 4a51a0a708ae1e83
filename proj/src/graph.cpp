#include "intentkg/graph.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "intentkg/util.hpp"

namespace intentkg {

using nlohmann::json;

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Intent: return "Intent";
    case NodeKind::Function: return "Function";
    case NodeKind::Product: return "Product";
    case NodeKind::Sememe: return "Sememe";
  }
  return "?";
}

std::string_view to_string(EdgeKind k) {
  switch (k) {
    case EdgeKind::IsA: return "isA";
    case EdgeKind::Consequent: return "consequent";
    case EdgeKind::Consist: return "consist";
    case EdgeKind::Has: return "has";
  }
  return "?";
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Lexical: return "lexical";
    case Provenance::Embedding: return "embedding";
    case Provenance::Bayesian: return "bayesian";
    case Provenance::Manual: return "manual";
    case Provenance::Generated: return "generated";
  }
  return "?";
}

NodeKind node_kind_from_string(std::string_view s) {
  if (s == "Intent") return NodeKind::Intent;
  if (s == "Function") return NodeKind::Function;
  if (s == "Product") return NodeKind::Product;
  if (s == "Sememe") return NodeKind::Sememe;
  throw LookupError("unknown node kind: " + std::string(s));
}

EdgeKind edge_kind_from_string(std::string_view s) {
  if (s == "isA") return EdgeKind::IsA;
  if (s == "consequent") return EdgeKind::Consequent;
  if (s == "consist") return EdgeKind::Consist;
  if (s == "has") return EdgeKind::Has;
  throw LookupError("unknown edge kind: " + std::string(s));
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "lexical") return Provenance::Lexical;
  if (s == "embedding") return Provenance::Embedding;
  if (s == "bayesian") return Provenance::Bayesian;
  if (s == "manual") return Provenance::Manual;
  if (s == "generated") return Provenance::Generated;
  throw LookupError("unknown provenance: " + std::string(s));
}

bool schema_admits(EdgeKind kind, NodeKind src, NodeKind dst) {
  switch (kind) {
    case EdgeKind::IsA:
      return (src == NodeKind::Intent && dst == NodeKind::Intent) ||
             (src == NodeKind::Product && dst == NodeKind::Product);
    case EdgeKind::Consequent:
      return src == NodeKind::Intent && dst == NodeKind::Intent;
    case EdgeKind::Consist:
      return src == NodeKind::Intent &&
             (dst == NodeKind::Function || dst == NodeKind::Product);
    case EdgeKind::Has:
      return (src == NodeKind::Function || src == NodeKind::Product) &&
             dst == NodeKind::Sememe;
  }
  return false;
}

void ConceptGraph::require_mutable() const {
  if (frozen_) throw std::logic_error("graph is frozen");
}

NodeId ConceptGraph::add_node(NodeKind kind, std::string_view label,
                              const std::set<std::string>& aliases) {
  require_mutable();
  std::string canon = canonical_label(label);
  if (canon.empty()) throw LookupError("add_node: empty label");
  auto key = std::make_pair(static_cast<uint8_t>(kind), canon);
  auto it = label_index_.find(key);
  if (it != label_index_.end()) {
    Node& n = nodes_.at(it->second);
    for (const auto& a : aliases) n.aliases.insert(a);
    return it->second;
  }
  NodeId id = next_id_++;
  Node n;
  n.id = id;
  n.kind = kind;
  n.label = canon;
  n.aliases = aliases;
  nodes_.emplace(id, std::move(n));
  label_index_.emplace(key, id);
  return id;
}

void ConceptGraph::insert_node_with_id(NodeId id, NodeKind kind, std::string_view label,
                                       const std::set<std::string>& aliases,
                                       const std::map<std::string, std::string>& attrs) {
  require_mutable();
  std::string canon = canonical_label(label);
  if (canon.empty()) throw LookupError("insert_node_with_id: empty label");
  if (nodes_.count(id)) throw LookupError("duplicate node id " + std::to_string(id));
  auto key = std::make_pair(static_cast<uint8_t>(kind), canon);
  if (label_index_.count(key)) {
    throw LookupError("duplicate (kind, label): " + canon);
  }
  Node n;
  n.id = id;
  n.kind = kind;
  n.label = canon;
  n.aliases = aliases;
  n.attrs = attrs;
  nodes_.emplace(id, std::move(n));
  label_index_.emplace(key, id);
  next_id_ = std::max(next_id_, id + 1);
}

std::vector<NodeId> ConceptGraph::isa_cycle_path(NodeId src, NodeId dst) const {
  // Path dst ->isA..-> src exists iff adding src->dst closes a cycle.
  if (src == dst) return {src, src};
  std::vector<NodeId> stack{dst};
  std::map<NodeId, NodeId> parent;
  std::set<NodeId> seen{dst};
  while (!stack.empty()) {
    NodeId cur = stack.back();
    stack.pop_back();
    auto it = out_index_.find({cur, static_cast<uint8_t>(EdgeKind::IsA)});
    if (it == out_index_.end()) continue;
    for (size_t ei : it->second) {
      NodeId nxt = edges_[ei].dst;
      if (seen.count(nxt)) continue;
      parent[nxt] = cur;
      if (nxt == src) {
        std::vector<NodeId> tail;
        for (NodeId p = src; p != dst; p = parent.at(p)) tail.push_back(p);
        tail.push_back(dst);
        // would-be cycle: src -> dst -> ... -> src
        std::vector<NodeId> cycle{src};
        for (auto rit = tail.rbegin(); rit != tail.rend(); ++rit) {
          if (*rit != src) cycle.push_back(*rit);
        }
        cycle.push_back(src);
        return cycle;
      }
      seen.insert(nxt);
      stack.push_back(nxt);
    }
  }
  return {};
}

size_t ConceptGraph::add_edge(NodeId src, EdgeKind kind, NodeId dst, double confidence,
                              Provenance provenance) {
  require_mutable();
  const Node* sn = find(src);
  const Node* dn = find(dst);
  if (!sn) throw LookupError("add_edge: unknown src node " + std::to_string(src));
  if (!dn) throw LookupError("add_edge: unknown dst node " + std::to_string(dst));
  if (!schema_admits(kind, sn->kind, dn->kind)) {
    std::ostringstream os;
    os << "schema violation: " << to_string(sn->kind) << " -" << to_string(kind) << "-> "
       << to_string(dn->kind);
    throw OntologyError(os.str());
  }
  if (kind == EdgeKind::Consequent && src == dst) {
    throw OntologyError("consequent self-loop on node " + std::to_string(src));
  }
  if (confidence < 0.0 || confidence > 1.0 || !(confidence == confidence)) {
    throw OntologyError("confidence out of [0,1]");
  }
  if (kind == EdgeKind::IsA) {
    std::vector<NodeId> cycle = isa_cycle_path(src, dst);
    if (!cycle.empty()) {
      std::ostringstream os;
      os << "isA cycle:";
      for (NodeId n : cycle) os << " " << n;
      throw CycleError(os.str(), cycle);
    }
  }
  auto ekey = std::make_tuple(src, static_cast<uint8_t>(kind), dst);
  auto eit = edge_index_.find(ekey);
  if (eit != edge_index_.end()) {
    edges_[eit->second].confidence = confidence;
    edges_[eit->second].provenance = provenance;
    return eit->second;
  }
  Edge e{src, dst, kind, confidence, provenance};
  size_t idx = edges_.size();
  edges_.push_back(e);
  out_index_[{src, static_cast<uint8_t>(kind)}].push_back(idx);
  in_index_[{dst, static_cast<uint8_t>(kind)}].push_back(idx);
  edge_index_.emplace(ekey, idx);
  return idx;
}

void ConceptGraph::set_attr(NodeId id, const std::string& key, const std::string& value) {
  require_mutable();
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw LookupError("set_attr: unknown node " + std::to_string(id));
  it->second.attrs[key] = value;
}

const Node* ConceptGraph::find(NodeId id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const Node& ConceptGraph::node(NodeId id) const {
  const Node* n = find(id);
  if (!n) throw LookupError("unknown node " + std::to_string(id));
  return *n;
}

NodeId ConceptGraph::find_by_label(NodeKind kind, std::string_view label) const {
  auto it = label_index_.find({static_cast<uint8_t>(kind), canonical_label(label)});
  return it == label_index_.end() ? kNoNode : it->second;
}

std::vector<NodeId> ConceptGraph::node_ids_sorted() const {
  std::vector<NodeId> ids;
  ids.reserve(nodes_.size());
  for (const auto& [id, _] : nodes_) ids.push_back(id);
  return ids;  // std::map keeps them sorted
}

std::vector<NodeId> ConceptGraph::nodes_of_kind(NodeKind kind) const {
  std::vector<NodeId> ids;
  for (const auto& [id, n] : nodes_) {
    if (n.kind == kind) ids.push_back(id);
  }
  return ids;
}

std::vector<const Edge*> ConceptGraph::out_edges(NodeId src, std::optional<EdgeKind> kind) const {
  std::vector<const Edge*> out;
  auto collect = [&](EdgeKind k) {
    auto it = out_index_.find({src, static_cast<uint8_t>(k)});
    if (it == out_index_.end()) return;
    for (size_t i : it->second) out.push_back(&edges_[i]);
  };
  if (kind) {
    collect(*kind);
  } else {
    for (uint8_t k = 0; k < 4; ++k) collect(static_cast<EdgeKind>(k));
  }
  return out;
}

std::vector<const Edge*> ConceptGraph::in_edges(NodeId dst, std::optional<EdgeKind> kind) const {
  std::vector<const Edge*> out;
  auto collect = [&](EdgeKind k) {
    auto it = in_index_.find({dst, static_cast<uint8_t>(k)});
    if (it == in_index_.end()) return;
    for (size_t i : it->second) out.push_back(&edges_[i]);
  };
  if (kind) {
    collect(*kind);
  } else {
    for (uint8_t k = 0; k < 4; ++k) collect(static_cast<EdgeKind>(k));
  }
  return out;
}

std::vector<NodeId> ConceptGraph::consist_targets(NodeId intent, NodeKind kind) const {
  std::vector<NodeId> out;
  for (const Edge* e : out_edges(intent, EdgeKind::Consist)) {
    const Node* n = find(e->dst);
    if (n && n->kind == kind) out.push_back(e->dst);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Kahn's algorithm on the isA subgraph restricted to one node kind.
// Returns ids left over when a cycle blocks completion.
std::vector<NodeId> isa_cycle_members(const ConceptGraph& g, NodeKind kind) {
  std::map<NodeId, int> indeg;
  std::map<NodeId, std::vector<NodeId>> adj;
  for (NodeId id : g.nodes_of_kind(kind)) indeg[id] = 0;
  for (const Edge& e : g.edges()) {
    if (e.kind != EdgeKind::IsA) continue;
    const Node* s = g.find(e.src);
    const Node* d = g.find(e.dst);
    if (!s || !d || s->kind != kind || d->kind != kind) continue;
    adj[e.src].push_back(e.dst);
    indeg[e.dst]++;
  }
  std::vector<NodeId> queue;
  for (auto& [id, deg] : indeg) {
    if (deg == 0) queue.push_back(id);
  }
  size_t processed = 0;
  while (!queue.empty()) {
    NodeId cur = queue.back();
    queue.pop_back();
    ++processed;
    for (NodeId nxt : adj[cur]) {
      if (--indeg[nxt] == 0) queue.push_back(nxt);
    }
  }
  std::vector<NodeId> stuck;
  if (processed < indeg.size()) {
    for (auto& [id, deg] : indeg) {
      if (deg > 0) stuck.push_back(id);
    }
  }
  return stuck;
}

}  // namespace

ValidationReport ConceptGraph::validate() const {
  ValidationReport report;
  for (size_t i = 0; i < edges_.size(); ++i) {
    const Edge& e = edges_[i];
    const Node* s = find(e.src);
    const Node* d = find(e.dst);
    if (!s || !d) {
      report.findings.push_back({"DANGLING_EDGE",
                                 "edge #" + std::to_string(i) + " references a missing node"});
      continue;
    }
    if (!schema_admits(e.kind, s->kind, d->kind)) {
      std::ostringstream os;
      os << "edge #" << i << ": " << to_string(s->kind) << " -" << to_string(e.kind) << "-> "
         << to_string(d->kind);
      report.findings.push_back({"SCHEMA_VIOLATION", os.str()});
    }
    if (e.kind == EdgeKind::Consequent && e.src == e.dst) {
      report.findings.push_back({"SELF_LOOP", "consequent self-loop on " + std::to_string(e.src)});
    }
    if (e.kind == EdgeKind::IsA && e.src == e.dst) {
      report.findings.push_back({"ISA_CYCLE", "isA self-loop on " + std::to_string(e.src)});
    }
  }
  for (NodeKind kind : {NodeKind::Intent, NodeKind::Product}) {
    std::vector<NodeId> stuck = isa_cycle_members(*this, kind);
    if (!stuck.empty()) {
      std::ostringstream os;
      os << to_string(kind) << " isA cycle among nodes:";
      for (NodeId id : stuck) os << " " << id;
      report.findings.push_back({"ISA_CYCLE", os.str()});
    }
  }
  for (NodeId id : nodes_of_kind(NodeKind::Intent)) {
    if (out_edges(id, EdgeKind::Consist).empty()) {
      report.warnings.push_back(
          {"MISSING_CONSIST", "intent " + std::to_string(id) + " has no consist edge"});
    }
  }
  return report;
}

std::vector<std::vector<NodeId>> ConceptGraph::consequent_chains(NodeId start,
                                                                 int max_depth) const {
  const Node* s = find(start);
  if (!s) throw LookupError("consequent_chains: unknown node " + std::to_string(start));
  if (s->kind != NodeKind::Intent) {
    throw LookupError("consequent_chains: node " + std::to_string(start) + " is not an Intent");
  }
  struct Found {
    std::vector<NodeId> path;
    double conf = 1.0;
  };
  std::vector<Found> found;
  std::vector<NodeId> path{start};
  std::set<NodeId> on_path{start};

  auto dfs = [&](auto&& self, NodeId cur, double conf, int depth) -> void {
    if (depth >= max_depth) return;
    for (const Edge* e : out_edges(cur, EdgeKind::Consequent)) {
      if (on_path.count(e->dst)) continue;  // simple paths only
      path.push_back(e->dst);
      on_path.insert(e->dst);
      found.push_back({path, conf * e->confidence});
      self(self, e->dst, conf * e->confidence, depth + 1);
      on_path.erase(e->dst);
      path.pop_back();
    }
  };
  dfs(dfs, start, 1.0, 0);

  std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) {
    if (a.path.size() != b.path.size()) return a.path.size() < b.path.size();
    if (a.conf != b.conf) return a.conf > b.conf;
    return a.path < b.path;
  });
  std::vector<std::vector<NodeId>> out;
  out.reserve(found.size());
  for (auto& f : found) out.push_back(std::move(f.path));
  return out;
}

bool ConceptGraph::structurally_equal(const ConceptGraph& other) const {
  if (nodes_.size() != other.nodes_.size() || edges_.size() != other.edges_.size()) return false;
  for (const auto& [id, n] : nodes_) {
    const Node* o = other.find(id);
    if (!o || o->kind != n.kind || o->label != n.label || o->aliases != n.aliases ||
        o->attrs != n.attrs) {
      return false;
    }
  }
  auto key = [](const Edge& e) {
    return std::make_tuple(e.src, static_cast<uint8_t>(e.kind), e.dst);
  };
  std::map<std::tuple<NodeId, uint8_t, NodeId>, std::pair<double, uint8_t>> mine, theirs;
  for (const Edge& e : edges_) mine[key(e)] = {e.confidence, static_cast<uint8_t>(e.provenance)};
  for (const Edge& e : other.edges_) {
    theirs[key(e)] = {e.confidence, static_cast<uint8_t>(e.provenance)};
  }
  return mine == theirs;
}

uint64_t ConceptGraph::fingerprint() const {
  return fnv1a64(serialize_graph(*this));
}

std::string serialize_graph(const ConceptGraph& graph) {
  std::ostringstream os;
  for (NodeId id : graph.node_ids_sorted()) {
    const Node& n = graph.node(id);
    json j;
    j["t"] = "node";
    j["id"] = n.id;
    j["kind"] = std::string(to_string(n.kind));
    j["label"] = n.label;
    j["aliases"] = n.aliases;
    j["attrs"] = n.attrs;
    os << j.dump() << "\n";
  }
  std::vector<Edge> sorted = graph.edges();
  std::sort(sorted.begin(), sorted.end(), [](const Edge& a, const Edge& b) {
    return std::make_tuple(a.src, static_cast<uint8_t>(a.kind), a.dst) <
           std::make_tuple(b.src, static_cast<uint8_t>(b.kind), b.dst);
  });
  for (const Edge& e : sorted) {
    json j;
    j["t"] = "edge";
    j["src"] = e.src;
    j["kind"] = std::string(to_string(e.kind));
    j["dst"] = e.dst;
    j["conf"] = e.confidence;
    j["prov"] = std::string(to_string(e.provenance));
    os << j.dump() << "\n";
  }
  return os.str();
}

void save_graph(const ConceptGraph& graph, const std::string& path) {
  write_text_file(path, serialize_graph(graph));
}

ConceptGraph parse_graph(const std::string& content) {
  ConceptGraph g;
  std::istringstream is(content);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad json: ") + e.what(), line_no);
    }
    try {
      std::string t = j.at("t").get<std::string>();
      if (t == "node") {
        std::set<std::string> aliases;
        json jalias = j.value("aliases", json::array());
        for (const auto& a : jalias) aliases.insert(a.get<std::string>());
        std::map<std::string, std::string> attrs;
        json jattrs = j.value("attrs", json::object());
        for (const auto& [k, v] : jattrs.items()) attrs[k] = v.get<std::string>();
        g.insert_node_with_id(j.at("id").get<NodeId>(),
                              node_kind_from_string(j.at("kind").get<std::string>()),
                              j.at("label").get<std::string>(), aliases, attrs);
      } else if (t == "edge") {
        g.add_edge(j.at("src").get<NodeId>(),
                   edge_kind_from_string(j.at("kind").get<std::string>()),
                   j.at("dst").get<NodeId>(), j.value("conf", 1.0),
                   provenance_from_string(j.value("prov", "manual")));
      } else {
        throw ParseError("unknown record type '" + t + "'", line_no);
      }
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), line_no);
    } catch (const OntologyError& e) {
      throw OntologyError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    } catch (const CycleError& e) {
      throw CycleError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")",
                       e.cycle_path);
    } catch (const LookupError& e) {
      throw OntologyError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
  }
  return g;
}

ConceptGraph load_graph(const std::string& path) {
  return parse_graph(read_text_file(path));
}

}  // namespace intentkg
