#include "intentkg/mining.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "intentkg/util.hpp"

namespace intentkg {

using nlohmann::json;

namespace {

// Longest product match starting at token position i; returns token count.
int match_product(const std::vector<Token>& toks, size_t i, const Lexicon& lex,
                  std::string* matched) {
  std::string acc;
  int best = 0;
  for (size_t k = 0; k < 4 && i + k < toks.size(); ++k) {
    if (k) acc += ' ';
    acc += toks[i + k].text;
    if (lex.products.count(acc)) {
      best = static_cast<int>(k + 1);
      *matched = acc;
    }
  }
  return best;
}

}  // namespace

std::vector<IntentCandidate> extract_intent_candidates(const std::vector<std::string>& corpus,
                                                       const Lexicon& lexicon) {
  if (lexicon.empty()) throw ConfigError("extract_intent_candidates: empty lexicon");

  std::map<std::pair<std::string, std::string>, IntentCandidate> agg;
  for (const std::string& doc : corpus) {
    std::vector<Token> toks;
    for (Token& t : tokenize(doc)) {
      if (!lexicon.stopwords.count(t.text)) toks.push_back(std::move(t));
    }
    for (size_t i = 0; i < toks.size(); ++i) {
      if (!lexicon.functions.count(toks[i].text)) continue;
      // function precedes product, at most 4 tokens ahead
      for (size_t j = i + 1; j <= i + 4 && j < toks.size(); ++j) {
        std::string product;
        int len = match_product(toks, j, lexicon, &product);
        if (len == 0) continue;
        auto key = std::make_pair(toks[i].text, product);
        auto it = agg.find(key);
        if (it == agg.end()) {
          IntentCandidate c;
          c.function = toks[i].text;
          c.product = product;
          c.span_begin = toks[i].begin;
          c.span_end = toks[j + len - 1].end;
          c.support = 1;
          agg.emplace(key, std::move(c));
        } else {
          it->second.support += 1;
        }
        break;  // nearest product wins for this function occurrence
      }
    }
  }
  std::vector<IntentCandidate> out;
  out.reserve(agg.size());
  for (auto& [_, c] : agg) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const IntentCandidate& a, const IntentCandidate& b) {
    if (a.support != b.support) return a.support > b.support;
    return a.label() < b.label();
  });
  return out;
}

std::vector<AlignmentCluster> align_nodes(const std::vector<std::string>& labels,
                                          const TextEncoder& encoder, double tau) {
  if (tau <= 0.0 || tau > 1.0) throw std::invalid_argument("align_nodes: tau must be in (0,1]");

  // collapse exact duplicates after canonicalization; count support
  std::map<std::string, int> support;           // canonical -> count
  std::map<std::string, std::string> canon_of;  // input -> canonical
  std::vector<std::string> distinct;
  for (const std::string& l : labels) {
    std::string c = canonical_label(l);
    canon_of[l] = c;
    if (support.emplace(c, 0).second) distinct.push_back(c);
    support[c] += 1;
  }
  std::sort(distinct.begin(), distinct.end());

  const size_t n = distinct.size();
  std::vector<std::vector<double>> vecs(n);
  for (size_t i = 0; i < n; ++i) vecs[i] = encoder.encode(distinct[i]);

  // union-find single-link
  std::vector<size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      if (cosine_similarity(vecs[i], vecs[j]) >= tau) {
        parent[find(i)] = find(j);
      }
    }
  }

  std::map<size_t, AlignmentCluster> clusters;
  for (size_t i = 0; i < n; ++i) {
    AlignmentCluster& c = clusters[find(i)];
    c.members.push_back(distinct[i]);
  }
  std::vector<AlignmentCluster> out;
  for (auto& [_, c] : clusters) {
    std::sort(c.members.begin(), c.members.end());
    int best_support = -1;
    for (const std::string& m : c.members) {
      int s = support[m];
      if (s > best_support || (s == best_support && m < c.canonical)) {
        best_support = s;
        c.canonical = m;
      }
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(),
            [](const AlignmentCluster& a, const AlignmentCluster& b) {
              return a.canonical < b.canonical;
            });
  return out;
}

namespace {

struct IntentShape {
  NodeId intent;
  NodeId function;
  NodeId product;
};

// Intents that have exactly one Function and one Product via Consist.
std::vector<IntentShape> intent_shapes(const ConceptGraph& g) {
  std::vector<IntentShape> shapes;
  for (NodeId id : g.nodes_of_kind(NodeKind::Intent)) {
    auto funcs = g.consist_targets(id, NodeKind::Function);
    auto prods = g.consist_targets(id, NodeKind::Product);
    if (funcs.size() == 1 && prods.size() == 1) {
      shapes.push_back({id, funcs[0], prods[0]});
    }
  }
  return shapes;
}

}  // namespace

std::vector<ScoredRelation> mine_isa_lexical(const ConceptGraph& graph) {
  // BFS depth over the Product isA subgraph from each product.
  std::vector<IntentShape> shapes = intent_shapes(graph);

  std::map<NodeId, std::map<NodeId, int>> closure;  // product -> ancestor -> min depth
  for (NodeId p : graph.nodes_of_kind(NodeKind::Product)) {
    std::map<NodeId, int>& reach = closure[p];
    std::deque<std::pair<NodeId, int>> queue{{p, 0}};
    while (!queue.empty()) {
      auto [cur, d] = queue.front();
      queue.pop_front();
      for (const Edge* e : graph.out_edges(cur, EdgeKind::IsA)) {
        if (reach.count(e->dst)) continue;
        reach[e->dst] = d + 1;
        queue.emplace_back(e->dst, d + 1);
      }
    }
  }

  std::vector<ScoredRelation> out;
  for (const IntentShape& a : shapes) {
    for (const IntentShape& b : shapes) {
      if (a.intent == b.intent || a.function != b.function) continue;
      auto it = closure[a.product].find(b.product);
      if (it == closure[a.product].end()) continue;
      int depth = it->second;
      ScoredRelation r;
      r.src = graph.node(a.intent).label;
      r.dst = graph.node(b.intent).label;
      r.kind = EdgeKind::IsA;
      r.score = std::pow(0.9, depth - 1);
      r.evidence["depth"] = depth;
      out.push_back(std::move(r));
    }
  }
  std::sort(out.begin(), out.end(), [](const ScoredRelation& a, const ScoredRelation& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  return out;
}

std::vector<ScoredRelation> mine_isa_embedding(const ConceptGraph& graph,
                                               const TextEncoder& encoder, int top_k,
                                               double tau) {
  if (top_k < 1) throw std::invalid_argument("mine_isa_embedding: top_k must be >= 1");
  std::vector<NodeId> products = graph.nodes_of_kind(NodeKind::Product);
  const size_t n = products.size();
  std::vector<std::vector<double>> vecs(n);
  for (size_t i = 0; i < n; ++i) vecs[i] = encoder.encode(graph.node(products[i]).label);

  // product -> intents using it (with their function), via Consist
  std::map<NodeId, std::vector<std::pair<NodeId, NodeId>>> users;  // product -> (intent, function)
  for (const IntentShape& s : intent_shapes(graph)) {
    users[s.product].emplace_back(s.intent, s.function);
  }

  std::map<std::pair<std::string, std::string>, ScoredRelation> agg;
  for (size_t i = 0; i < n; ++i) {
    // top-K most similar other products with similarity >= tau
    std::vector<std::pair<double, size_t>> sims;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;  // self pair excluded
      double s = cosine_similarity(vecs[i], vecs[j]);
      if (s >= tau) sims.emplace_back(s, j);
    }
    std::sort(sims.begin(), sims.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return products[a.second] < products[b.second];
    });
    if (static_cast<int>(sims.size()) > top_k) sims.resize(top_k);

    for (const auto& [sim, j] : sims) {
      for (const auto& [ia, fa] : users[products[i]]) {
        for (const auto& [ib, fb] : users[products[j]]) {
          if (ia == ib || fa != fb) continue;
          for (const auto& [src, dst] : {std::make_pair(ia, ib), std::make_pair(ib, ia)}) {
            auto key = std::make_pair(graph.node(src).label, graph.node(dst).label);
            auto it = agg.find(key);
            if (it == agg.end() || it->second.score < sim) {
              ScoredRelation r;
              r.src = key.first;
              r.dst = key.second;
              r.kind = EdgeKind::IsA;
              r.score = sim;
              r.evidence["cosine"] = sim;
              agg[key] = std::move(r);
            }
          }
        }
      }
    }
  }
  std::vector<ScoredRelation> out;
  out.reserve(agg.size());
  for (auto& [_, r] : agg) out.push_back(std::move(r));
  std::sort(out.begin(), out.end(), [](const ScoredRelation& a, const ScoredRelation& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::tie(a.src, a.dst) < std::tie(b.src, b.dst);
  });
  return out;
}

std::string serialize_relations(const std::vector<ScoredRelation>& relations) {
  std::ostringstream os;
  for (const ScoredRelation& r : relations) {
    json ev(r.evidence);
    os << r.src << "\t" << to_string(r.kind) << "\t" << r.dst << "\t" << format_double(r.score)
       << "\t" << ev.dump() << "\n";
  }
  return os.str();
}

std::vector<ScoredRelation> parse_relations(const std::string& content) {
  std::vector<ScoredRelation> out;
  std::istringstream is(content);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    size_t pos = 0;
    while (true) {
      size_t tab = line.find('\t', pos);
      if (tab == std::string::npos) {
        cols.push_back(line.substr(pos));
        break;
      }
      cols.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (cols.size() != 5) throw ParseError("expected 5 tab-separated columns", line_no);
    ScoredRelation r;
    r.src = cols[0];
    r.kind = edge_kind_from_string(cols[1]);
    r.dst = cols[2];
    r.score = std::stod(cols[3]);
    try {
      json ev = json::parse(cols[4]);
      for (const auto& [k, v] : ev.items()) r.evidence[k] = v.get<double>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad evidence json: ") + e.what(), line_no);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_relations(const std::vector<ScoredRelation>& relations, const std::string& path) {
  write_text_file(path, serialize_relations(relations));
}

std::vector<ScoredRelation> load_relations(const std::string& path) {
  return parse_relations(read_text_file(path));
}

}  // namespace intentkg
