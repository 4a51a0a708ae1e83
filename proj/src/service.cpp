#include "intentkg/service.hpp"

#include <json.hpp>

#define CPPHTTPLIB_NO_COMPRESSION
#include <httplib.h>

#include "intentkg/errors.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

using nlohmann::json;

ServiceState ServiceState::load(const PipelineConfig& config) {
  ServiceState s;
  s.graph = load_graph(config.graph_path());
  s.graph.freeze();
  s.predictor = load_predictor(config.predictor_fused_path());
  s.matcher = load_matcher(config.matcher_path());
  s.table = load_embedding_table(config.embeddings_path());
  s.encoder = TextEncoder(config.encoder);
  s.eval = config.eval;
  s.graph_fingerprint = hex64(s.graph.fingerprint());
  s.model_fingerprint = hex64(s.predictor.fingerprint());
  return s;
}

namespace {

HandlerResult error_response(int status, const std::string& code, const std::string& detail) {
  json j;
  j["error"]["code"] = code;
  j["error"]["detail"] = detail;
  return {status, j.dump()};
}

json fingerprints(const ServiceState& s) {
  json j;
  j["graph"] = s.graph_fingerprint;
  j["model"] = s.model_fingerprint;
  return j;
}

}  // namespace

HandlerResult handle_predict(const ServiceState& state, const std::string& request_body) {
  json req;
  try {
    req = json::parse(request_body);
  } catch (const json::exception& e) {
    return error_response(400, "BAD_JSON", e.what());
  }
  if (!req.contains("events") || !req.at("events").is_array()) {
    return error_response(400, "MISSING_FIELD", "events");
  }
  std::vector<UserEvent> events;
  for (const json& je : req.at("events")) {
    UserEvent e;
    if (!je.contains("intent")) return error_response(400, "MISSING_FIELD", "events[].intent");
    if (!je.contains("ts")) return error_response(400, "MISSING_FIELD", "events[].ts");
    e.intent = je.at("intent").get<std::string>();
    e.ts = je.at("ts").get<int64_t>();
    e.location = je.value("loc", "");
    e.user = "request";
    events.push_back(std::move(e));
  }
  if (events.empty()) return error_response(400, "EMPTY_EVENTS", "events");
  int k = req.value("k", 10);
  double beta = req.value("beta", state.eval.beta);
  if (k < 1) return error_response(400, "BAD_FIELD", "k");
  if (beta < 0.0) return error_response(400, "BAD_FIELD", "beta");
  std::vector<QuerySlot> future;
  if (req.contains("future")) {
    for (const json& jf : req.at("future")) {
      QuerySlot slot;
      slot.ts = jf.value("ts", events.back().ts + 60);
      slot.location = jf.value("loc", "");
      future.push_back(std::move(slot));
    }
  }

  PredictionResult result;
  try {
    result = predict_top_k(state.predictor, events, k, state.graph, beta, future);
  } catch (const LookupError& e) {
    return error_response(404, "UNKNOWN_INTENT", e.what());
  } catch (const std::invalid_argument& e) {
    return error_response(400, "BAD_REQUEST", e.what());
  }

  json resp;
  resp["intents"] = json::array();
  for (const auto& [intent, prob] : result.top_k) {
    json ji;
    ji["intent"] = intent;
    ji["p"] = prob;
    resp["intents"].push_back(ji);
  }
  resp["explanations"] = json::array();
  for (const RuleExplanation& ex : result.explanations) {
    json je;
    je["chain"] = ex.chain;
    je["confidence"] = ex.confidence;
    je["target"] = ex.target;
    resp["explanations"].push_back(je);
  }
  resp["fingerprints"] = fingerprints(state);
  return {200, resp.dump()};
}

HandlerResult handle_label_item(const ServiceState& state, const std::string& request_body) {
  json req;
  try {
    req = json::parse(request_body);
  } catch (const json::exception& e) {
    return error_response(400, "BAD_JSON", e.what());
  }
  if (!req.contains("text")) return error_response(400, "MISSING_FIELD", "text");
  Item item;
  item.id = req.value("id", "request");
  item.text = req.at("text").get<std::string>();
  if (req.contains("image_vec")) {
    item.image_vec = req.at("image_vec").get<std::vector<double>>();
  }
  if (item.text.empty() && item.image_vec.empty()) {
    return error_response(400, "BAD_FIELD", "text");
  }
  int top_k = req.value("top_k", 5);
  double threshold = req.value("threshold", 0.0);

  std::vector<IntentScore> scores =
      label_item(item, state.table, state.matcher, state.encoder, top_k, threshold);
  json resp;
  resp["intents"] = json::array();
  for (const IntentScore& s : scores) {
    json ji;
    ji["intent"] = state.graph.node(s.intent).label;
    ji["node"] = s.intent;
    ji["score"] = s.score;
    resp["intents"].push_back(ji);
  }
  resp["fingerprints"] = fingerprints(state);
  return {200, resp.dump()};
}

HandlerResult handle_kg_query(const ServiceState& state, const std::string& id_param,
                              const std::string& label_param) {
  NodeId id = kNoNode;
  if (!id_param.empty()) {
    try {
      id = static_cast<NodeId>(std::stoul(id_param));
    } catch (const std::exception&) {
      return error_response(400, "BAD_FIELD", "id");
    }
  } else if (!label_param.empty()) {
    id = state.graph.find_by_label(NodeKind::Intent, label_param);
    if (id == kNoNode) {
      for (NodeKind kind : {NodeKind::Function, NodeKind::Product, NodeKind::Sememe}) {
        id = state.graph.find_by_label(kind, label_param);
        if (id != kNoNode) break;
      }
    }
  } else {
    return error_response(400, "MISSING_FIELD", "id or label");
  }
  const Node* node = state.graph.find(id);
  if (!node) return error_response(404, "NODE_NOT_FOUND", id_param.empty() ? label_param : id_param);

  json resp;
  resp["node"]["id"] = node->id;
  resp["node"]["kind"] = std::string(to_string(node->kind));
  resp["node"]["label"] = node->label;
  resp["node"]["aliases"] = node->aliases;
  resp["edges"] = json::array();
  for (const Edge* e : state.graph.out_edges(id)) {
    json je;
    je["src"] = e->src;
    je["kind"] = std::string(to_string(e->kind));
    je["dst"] = e->dst;
    je["dst_label"] = state.graph.node(e->dst).label;
    je["conf"] = e->confidence;
    je["direction"] = "out";
    resp["edges"].push_back(je);
  }
  for (const Edge* e : state.graph.in_edges(id)) {
    json je;
    je["src"] = e->src;
    je["src_label"] = state.graph.node(e->src).label;
    je["kind"] = std::string(to_string(e->kind));
    je["dst"] = e->dst;
    je["conf"] = e->confidence;
    je["direction"] = "in";
    resp["edges"].push_back(je);
  }
  resp["chains"] = json::array();
  if (node->kind == NodeKind::Intent) {
    for (const auto& path : state.graph.consequent_chains(id, 2)) {
      json jc = json::array();
      for (NodeId n : path) jc.push_back(state.graph.node(n).label);
      resp["chains"].push_back(jc);
    }
  }
  resp["fingerprints"] = fingerprints(state);
  return {200, resp.dump()};
}

int run_service(const ServiceState& state, int port) {
  httplib::Server server;
  server.Post("/v1/predict", [&](const httplib::Request& req, httplib::Response& res) {
    HandlerResult r = handle_predict(state, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server.Post("/v1/label_item", [&](const httplib::Request& req, httplib::Response& res) {
    HandlerResult r = handle_label_item(state, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server.Get("/v1/kg/node", [&](const httplib::Request& req, httplib::Response& res) {
    HandlerResult r = handle_kg_query(state, req.get_param_value("id"),
                                      req.get_param_value("label"));
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  server.Get("/v1/health", [&](const httplib::Request&, httplib::Response& res) {
    json j;
    j["status"] = "ok";
    j["fingerprints"] = fingerprints(state);
    res.set_content(j.dump(), "application/json");
  });
  if (!server.listen("0.0.0.0", port)) return 1;
  return 0;
}

}  // namespace intentkg
