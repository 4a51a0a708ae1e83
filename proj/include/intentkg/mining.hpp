#pragma once

#include <map>
#include <string>
#include <vector>

#include "intentkg/graph.hpp"
#include "intentkg/lexicon.hpp"
#include "intentkg/text.hpp"

namespace intentkg {

// A (function, product) pair mined from item text.
struct IntentCandidate {
  std::string function;
  std::string product;
  size_t span_begin = 0;  // byte offsets into the first matching document
  size_t span_end = 0;
  int support = 1;

  std::string label() const { return function + " " + product; }
};

// Scans item texts for lexicon functions followed by lexicon products within
// a 4-token window (stopwords removed first). Deduplicated, supports summed,
// ordered by (support desc, surface asc).
std::vector<IntentCandidate> extract_intent_candidates(const std::vector<std::string>& corpus,
                                                       const Lexicon& lexicon);

struct AlignmentCluster {
  std::string canonical;             // highest-support member, ties lexicographic
  std::vector<std::string> members;  // distinct input labels, sorted
};

// Single-link clustering of labels by pairwise cosine similarity >= tau on
// the encoder's vectors. Exact duplicates (after canonicalization) collapse
// first and count as support.
std::vector<AlignmentCluster> align_nodes(const std::vector<std::string>& labels,
                                          const TextEncoder& encoder, double tau);

struct ScoredRelation {
  std::string src;  // intent key
  std::string dst;
  EdgeKind kind = EdgeKind::IsA;
  double score = 0.0;
  std::map<std::string, double> evidence;
};

// Lexical isA: intents sharing a Function whose Products are related through
// the Product isA closure. Score 1.0 for a direct product edge, 0.9^(d-1)
// for closure depth d.
std::vector<ScoredRelation> mine_isa_lexical(const ConceptGraph& graph);

// Embedding isA: per Product, the top-K most cosine-similar other Products
// (similarity >= tau) propose intent isA candidates through shared
// Functions, both directions. Candidates only; nothing is auto-inserted.
std::vector<ScoredRelation> mine_isa_embedding(const ConceptGraph& graph,
                                               const TextEncoder& encoder, int top_k, double tau);

// Tab-separated candidate file: src \t kind \t dst \t score \t evidence-json
std::string serialize_relations(const std::vector<ScoredRelation>& relations);
std::vector<ScoredRelation> parse_relations(const std::string& content);
void save_relations(const std::vector<ScoredRelation>& relations, const std::string& path);
std::vector<ScoredRelation> load_relations(const std::string& path);

}  // namespace intentkg
