#pragma once

#include <memory>
#include <string>

#include "intentkg/config.hpp"
#include "intentkg/gcn.hpp"
#include "intentkg/graph.hpp"
#include "intentkg/matcher.hpp"
#include "intentkg/predictor.hpp"

namespace intentkg {

// Everything a running service needs, loaded once and frozen. Handlers are
// pure functions over this state; any number of concurrent readers is safe.
struct ServiceState {
  ConceptGraph graph;
  PredictorModel predictor;
  MatcherParams matcher;
  IntentEmbeddingTable table;
  TextEncoder encoder;
  EvalConfig eval;
  std::string graph_fingerprint;
  std::string model_fingerprint;

  static ServiceState load(const PipelineConfig& config);
};

struct HandlerResult {
  int status = 200;
  std::string body;  // JSON
};

// POST /v1/predict {"events":[{"intent":..,"loc":..,"ts":..}],"k":..,"beta":..,
//                   "future":[{"ts":..,"loc":..}]}
HandlerResult handle_predict(const ServiceState& state, const std::string& request_body);

// POST /v1/label_item {"text":..,"top_k":..,"threshold":..}
HandlerResult handle_label_item(const ServiceState& state, const std::string& request_body);

// GET /v1/kg/node?id=<node id> or ?label=<intent label>
HandlerResult handle_kg_query(const ServiceState& state, const std::string& id_param,
                              const std::string& label_param);

// Blocking server loop on the configured port (used by the CLI serve
// subcommand); returns when the listener stops.
int run_service(const ServiceState& state, int port);

}  // namespace intentkg
