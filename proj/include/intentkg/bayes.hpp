#pragma once

#include <cstdint>
#include <vector>

#include "intentkg/events.hpp"
#include "intentkg/mining.hpp"

namespace intentkg {

struct ConsequentConfig {
  int max_parents = 3;
  int min_support = 30;      // sessions evidencing src-then-dst
  double min_lift = 1.5;     // P(dst follows src) / P(dst)
  double margin = 0.1;       // temporal-asymmetry margin over 0.5
  int restarts = 3;          // hill-climbing random restarts
  uint64_t seed = 7;
};

// Mines directed Consequent relations from sessions: (1) sessions become
// binary occurrence vectors, (2) BIC-scored hill climbing over DAG
// structures finds dependent intent pairs, (3) each pair is oriented by
// first-occurrence asymmetry and kept when lift and support clear the
// thresholds. Score = lift. Deterministic under the config seed.
std::vector<ScoredRelation> mine_consequent(const std::vector<Session>& sessions,
                                            const ConsequentConfig& config);

// Hill-climbing structure search over binary occurrence data; exposed for
// tests. Returns the adjacency (parent lists per variable) of the best
// scoring DAG over `restarts` restarts.
struct BayesNet {
  std::vector<std::vector<int>> parents;
  double bic = 0.0;
};
BayesNet learn_structure(const std::vector<std::vector<uint64_t>>& occurrence_rows, int n_vars,
                         int max_parents, int restarts, uint64_t seed);

}  // namespace intentkg
