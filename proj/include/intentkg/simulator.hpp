#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "intentkg/events.hpp"
#include "intentkg/graph.hpp"
#include "intentkg/matcher.hpp"
#include "intentkg/matrix.hpp"
#include "intentkg/predictor.hpp"

namespace intentkg {

struct WorldConfig {
  int n_intents = 20;
  int n_locations = 4;
  int n_planted = 10;        // planted Consequent edges
  double lift = 3.0;         // required session-level lift of planted edges
  double chain_prob = 0.6;   // P(next = dst | prev = src) for planted edges
  int session_len_min = 3;
  int session_len_max = 7;
  int items_per_intent = 4;
  double mod_strength = 3.0;  // hour/weekday/location boost factor
  bool allow_independent = false;
  uint64_t seed = 7;
};

struct PlantedEdge {
  int src = 0;  // intent slots
  int dst = 0;
  double prob = 0.0;  // next-step conditional probability
};

struct CatalogItem {
  std::string id;
  ItemKind kind = ItemKind::Query;
  std::string text;
  std::vector<int> intents;  // true intent slots
};

// Planted ground truth: every probability the generator uses is stored here,
// so mining and prediction metrics have an exact oracle.
struct SyntheticWorld {
  WorldConfig config;
  std::vector<std::string> intent_labels;  // slot -> label ("function product")
  std::vector<std::string> functions;      // parallel to intent_labels
  std::vector<std::string> products;
  std::vector<std::string> locations;
  std::vector<double> base_pop;  // normalized
  Mat hour_mod;                  // V x 24 multiplicative factors
  Mat wday_mod;                  // V x 7 (Monday = 0)
  Mat loc_aff;                   // V x n_locations
  std::vector<PlantedEdge> planted;
  std::vector<CatalogItem> catalog;
  std::vector<int> weekend_intents;    // slots with weekend-boosted wday_mod
  std::vector<std::pair<std::string, std::string>> product_isa;  // child -> parent

  int intent_slot(const std::string& label) const;  // -1 if absent

  // Base next-intent distribution under a session context.
  std::vector<double> base_dist(int hour, int wday, int loc) const;
  // Full conditional given the previous intent.
  std::vector<double> next_dist(int prev, int hour, int wday, int loc) const;

  void audit() const;  // throws ConfigError when tables are inconsistent
};

SyntheticWorld generate_world(const WorldConfig& config);

// Sessions of planted behavior; each session draws a location and a start
// second uniformly over whole weeks, so hour and weekday are uniform.
// Modulation uses the session-start context.
std::vector<UserEvent> generate_logs(const SyntheticWorld& world, int n_users,
                                     int events_per_user, uint64_t seed);

// Closed-form recall@1 of the Bayes-optimal predictor under the
// last-event-per-user protocol, from the planted tables alone.
double analytic_bayes_recall1(const SyntheticWorld& world);

// E over contexts of next_dist(src)[dst]; the oracle for empirical
// next-step conditional checks.
double expected_next_prob(const SyntheticWorld& world, int src, int dst);

// Temporal split: each user's trailing session (the last one with >= 2
// events) is held out whole; its last event is the prediction target and the
// rest of the session is the context. Everything else is training data.
struct HeldOutCase {
  std::vector<UserEvent> context;
  UserEvent target;
};

struct TrainEvalSplit {
  std::vector<Session> train_sessions;
  std::vector<HeldOutCase> held_out;
};

TrainEvalSplit split_temporal(const std::vector<UserEvent>& logs, int64_t session_gap);

struct EvalConfig {
  int recall_pool = 200;
  int top_k_intents = 10;
  double w1 = 1.0;   // match-score weight in ranking
  double w2 = 0.3;   // popularity weight
  int hit_n = 10;
  double beta = 0.5;  // rule boost; 0 disables
  double label_threshold = 0.5;
  int64_t session_gap = 3600;
};

enum class RecsysMode { Full, PopularityOnly, OraclePredictor, RandomPredictor };

struct EvalReport {
  double recall1 = 0.0;
  double recall10 = 0.0;
  double micro_f1 = 0.0;
  double hit_rate = 0.0;
  double rule_match_rate = 0.0;
  int eval_events = 0;
  std::string mode;
  uint64_t seed = 0;
  std::string config_echo;  // JSON

  std::string to_json() const;
  std::string to_table() const;
};

struct RecsysComponents {
  const PredictorModel* predictor = nullptr;
  const MatcherParams* matcher = nullptr;
  const IntentEmbeddingTable* table = nullptr;
  const ConceptGraph* graph = nullptr;
  const TextEncoder* encoder = nullptr;
};

// Offline recall+ranking loop: per held-out last event, build the recall
// pool (intent-based + popularity), rank, and score hit-rate@N; also
// reports next-intent recall@1/@10 and catalog labeling micro-F1.
EvalReport run_recsys(const SyntheticWorld& world, const std::vector<UserEvent>& logs,
                      const RecsysComponents& components, const EvalConfig& config,
                      RecsysMode mode = RecsysMode::Full, uint64_t seed = 7);

// Ranking of a candidate item-id pool by w1 * expected match + w2 *
// popularity; exposed for the harness-neutrality check.
std::vector<std::string> rank_items(const SyntheticWorld& world, const RecsysComponents& components,
                                    const std::vector<std::string>& pool,
                                    const std::vector<std::pair<std::string, double>>& top_intents,
                                    const std::map<std::string, double>& popularity,
                                    const EvalConfig& config);

struct AblationRow {
  std::string name;  // plain | plain+rules | fused | fused+rules
  double recall1 = 0.0;
  double recall10 = 0.0;
  double rule_match_rate = 0.0;
  int eval_events = 0;
};

// 4-way grid over {plain, fused} x {no rules, rules}; held-out protocol is
// the last event per user with the true future time/location as the query.
std::vector<AblationRow> evaluate_next_intent(const PredictorModel& plain,
                                              const PredictorModel& fused,
                                              const std::vector<UserEvent>& logs,
                                              const ConceptGraph& graph, const EvalConfig& config);

// Single-model evaluation (one row of the grid).
AblationRow evaluate_one(const PredictorModel& model, const std::vector<UserEvent>& logs,
                         const ConceptGraph& graph, const EvalConfig& config, double beta,
                         const std::string& name);

// Exposure-biased resampling for the optional feedback-loop round: events
// whose items were recommended get duplicated with the given probability.
std::vector<UserEvent> feedback_resample(const std::vector<UserEvent>& logs,
                                         const std::set<std::string>& recommended_items,
                                         double exposure_bias, uint64_t seed);

std::string serialize_world(const SyntheticWorld& world);
SyntheticWorld parse_world(const std::string& content);
void save_world(const SyntheticWorld& world, const std::string& path);
SyntheticWorld load_world(const std::string& path);

// Item corpus records for KG construction: {"id":..,"kind":..,"text":..}
std::string serialize_catalog(const SyntheticWorld& world);
std::vector<Item> parse_catalog(const std::string& content);

}  // namespace intentkg
