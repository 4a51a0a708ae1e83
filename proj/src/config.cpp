#include "intentkg/config.hpp"

#include <cstdlib>
#include <set>

#include <json.hpp>

#include "intentkg/errors.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::string& section,
                  const std::set<std::string>& allowed) {
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + key + "' in " + section);
    }
  }
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string PipelineConfig::graph_path() const {
  return paths.graph.empty() ? paths.out_dir + "/graph.jsonl" : paths.graph;
}
std::string PipelineConfig::world_path() const {
  return paths.world.empty() ? paths.out_dir + "/world.jsonl" : paths.world;
}
std::string PipelineConfig::logs_path() const {
  return paths.logs.empty() ? paths.out_dir + "/logs.jsonl" : paths.logs;
}
std::string PipelineConfig::catalog_path() const {
  return paths.catalog.empty() ? paths.out_dir + "/catalog.jsonl" : paths.catalog;
}
std::string PipelineConfig::product_isa_path() const {
  return paths.product_isa.empty() ? paths.out_dir + "/product_isa.tsv" : paths.product_isa;
}
std::string PipelineConfig::candidates_consequent_path() const {
  return paths.candidates_consequent.empty() ? paths.out_dir + "/candidates_consequent.tsv"
                                             : paths.candidates_consequent;
}
std::string PipelineConfig::candidates_isa_path() const {
  return paths.candidates_isa.empty() ? paths.out_dir + "/candidates_isa.tsv"
                                      : paths.candidates_isa;
}
std::string PipelineConfig::embeddings_path() const {
  return paths.embeddings.empty() ? paths.out_dir + "/intent_embeddings.tsv" : paths.embeddings;
}
std::string PipelineConfig::matcher_path() const {
  return paths.matcher.empty() ? paths.out_dir + "/matcher.jsonl" : paths.matcher;
}
std::string PipelineConfig::predictor_fused_path() const {
  return paths.predictor_fused.empty() ? paths.out_dir + "/predictor_fused.jsonl"
                                       : paths.predictor_fused;
}
std::string PipelineConfig::predictor_plain_path() const {
  return paths.predictor_plain.empty() ? paths.out_dir + "/predictor_plain.jsonl"
                                       : paths.predictor_plain;
}
std::string PipelineConfig::eval_report_path() const {
  return paths.eval_report.empty() ? paths.out_dir + "/eval_report.json" : paths.eval_report;
}

void PipelineConfig::propagate_seed() {
  mining.consequent.seed = seed;
  sim.world.seed = seed;
  encoder.hash_seed = seed ^ 0x5eedULL;
  gcn.seed = seed;
  predictor.seed = seed;
}

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  c.encoder.dim = 128;
  c.matcher.loss = MatchLoss::Asymmetric;
  c.matcher.weight_decay = 1e-3;
  c.propagate_seed();
  return c;
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad json: ") + e.what());
  }
  PipelineConfig c = default_pipeline_config();
  require_keys(j, "top level",
               {"paths", "mining", "world", "simulate", "encoder", "gcn", "matcher", "predictor",
                "eval", "service", "seed"});
  take(j, "seed", c.seed);
  c.propagate_seed();

  if (j.contains("paths")) {
    const json& p = j.at("paths");
    require_keys(p, "paths",
                 {"out_dir", "lexicon", "graph", "world", "logs", "catalog", "product_isa",
                  "candidates_consequent", "candidates_isa", "embeddings", "matcher",
                  "predictor_fused", "predictor_plain", "eval_report"});
    take(p, "out_dir", c.paths.out_dir);
    take(p, "lexicon", c.paths.lexicon);
    take(p, "graph", c.paths.graph);
    take(p, "world", c.paths.world);
    take(p, "logs", c.paths.logs);
    take(p, "catalog", c.paths.catalog);
    take(p, "product_isa", c.paths.product_isa);
    take(p, "candidates_consequent", c.paths.candidates_consequent);
    take(p, "candidates_isa", c.paths.candidates_isa);
    take(p, "embeddings", c.paths.embeddings);
    take(p, "matcher", c.paths.matcher);
    take(p, "predictor_fused", c.paths.predictor_fused);
    take(p, "predictor_plain", c.paths.predictor_plain);
    take(p, "eval_report", c.paths.eval_report);
  }
  if (j.contains("mining")) {
    const json& m = j.at("mining");
    require_keys(m, "mining",
                 {"gap_seconds", "max_len", "max_parents", "min_support", "min_lift", "margin",
                  "restarts", "isa_tau", "isa_top_k", "isa_accept", "align_tau",
                  "accept_threshold"});
    take(m, "gap_seconds", c.mining.gap_seconds);
    take(m, "max_len", c.mining.max_len);
    take(m, "max_parents", c.mining.consequent.max_parents);
    take(m, "min_support", c.mining.consequent.min_support);
    take(m, "min_lift", c.mining.consequent.min_lift);
    take(m, "margin", c.mining.consequent.margin);
    take(m, "restarts", c.mining.consequent.restarts);
    take(m, "isa_tau", c.mining.isa_tau);
    take(m, "isa_top_k", c.mining.isa_top_k);
    take(m, "isa_accept", c.mining.isa_accept);
    take(m, "align_tau", c.mining.align_tau);
    take(m, "accept_threshold", c.mining.accept_threshold);
  }
  if (j.contains("world")) {
    const json& w = j.at("world");
    require_keys(w, "world",
                 {"n_intents", "n_locations", "n_planted", "lift", "chain_prob",
                  "session_len_min", "session_len_max", "items_per_intent", "mod_strength",
                  "allow_independent"});
    take(w, "n_intents", c.sim.world.n_intents);
    take(w, "n_locations", c.sim.world.n_locations);
    take(w, "n_planted", c.sim.world.n_planted);
    take(w, "lift", c.sim.world.lift);
    take(w, "chain_prob", c.sim.world.chain_prob);
    take(w, "session_len_min", c.sim.world.session_len_min);
    take(w, "session_len_max", c.sim.world.session_len_max);
    take(w, "items_per_intent", c.sim.world.items_per_intent);
    take(w, "mod_strength", c.sim.world.mod_strength);
    take(w, "allow_independent", c.sim.world.allow_independent);
  }
  if (j.contains("simulate")) {
    const json& s = j.at("simulate");
    require_keys(s, "simulate", {"n_users", "events_per_user"});
    take(s, "n_users", c.sim.n_users);
    take(s, "events_per_user", c.sim.events_per_user);
  }
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    require_keys(e, "encoder", {"dim", "ngram_min", "ngram_max", "normalize"});
    take(e, "dim", c.encoder.dim);
    take(e, "ngram_min", c.encoder.ngram_min);
    take(e, "ngram_max", c.encoder.ngram_max);
    take(e, "normalize", c.encoder.normalize);
  }
  if (j.contains("gcn")) {
    const json& g = j.at("gcn");
    require_keys(g, "gcn", {"hidden_dim", "out_dim", "layers"});
    take(g, "hidden_dim", c.gcn.hidden_dim);
    take(g, "out_dim", c.gcn.out_dim);
    take(g, "layers", c.gcn.layers);
  }
  if (j.contains("matcher")) {
    const json& m = j.at("matcher");
    require_keys(m, "matcher",
                 {"loss", "gamma_pos", "gamma_neg", "learning_rate", "momentum", "weight_decay", "epochs", "image_dim"});
    if (m.contains("loss")) {
      std::string loss = m.at("loss").get<std::string>();
      if (loss == "bce") {
        c.matcher.loss = MatchLoss::Bce;
      } else if (loss == "asymmetric") {
        c.matcher.loss = MatchLoss::Asymmetric;
      } else {
        throw ConfigError("config: matcher.loss must be 'bce' or 'asymmetric'");
      }
    }
    take(m, "gamma_pos", c.matcher.gamma_pos);
    take(m, "gamma_neg", c.matcher.gamma_neg);
    take(m, "learning_rate", c.matcher.learning_rate);
    take(m, "momentum", c.matcher.momentum);
    take(m, "weight_decay", c.matcher.weight_decay);
    take(m, "epochs", c.matcher.epochs);
    take(m, "image_dim", c.matcher.image_dim);
  }
  if (j.contains("predictor")) {
    const json& p = j.at("predictor");
    require_keys(p, "predictor",
                 {"dim", "heads", "enc_layers", "dec_layers", "ffn_mult", "context", "horizon",
                  "fuse_kg", "learning_rate", "weight_decay", "epochs", "batch", "windows_per_epoch"});
    take(p, "dim", c.predictor.dim);
    take(p, "heads", c.predictor.heads);
    take(p, "enc_layers", c.predictor.enc_layers);
    take(p, "dec_layers", c.predictor.dec_layers);
    take(p, "ffn_mult", c.predictor.ffn_mult);
    take(p, "context", c.predictor.context);
    take(p, "horizon", c.predictor.horizon);
    take(p, "fuse_kg", c.predictor.fuse_kg);
    take(p, "learning_rate", c.predictor.learning_rate);
    take(p, "weight_decay", c.predictor.weight_decay);
    take(p, "windows_per_epoch", c.predictor.windows_per_epoch);
    take(p, "epochs", c.predictor.epochs);
    take(p, "batch", c.predictor.batch);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_keys(e, "eval",
                 {"recall_pool", "top_k_intents", "w1", "w2", "hit_n", "beta",
                  "label_threshold"});
    take(e, "recall_pool", c.eval.recall_pool);
    take(e, "top_k_intents", c.eval.top_k_intents);
    take(e, "w1", c.eval.w1);
    take(e, "w2", c.eval.w2);
    take(e, "hit_n", c.eval.hit_n);
    take(e, "beta", c.eval.beta);
    take(e, "label_threshold", c.eval.label_threshold);
  }
  if (j.contains("service")) {
    const json& s = j.at("service");
    require_keys(s, "service", {"port"});
    take(s, "port", c.service_port);
  }
  c.eval.session_gap = c.mining.gap_seconds;
  return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  return parse_pipeline_config(read_text_file(path));
}

void apply_overrides(PipelineConfig& config, const std::optional<uint64_t>& seed,
                     const std::optional<std::string>& out_dir) {
  if (const char* env = std::getenv("INTENTKG_SEED")) {
    config.seed = std::strtoull(env, nullptr, 10);
    config.propagate_seed();
  }
  if (const char* env = std::getenv("INTENTKG_OUT")) config.paths.out_dir = env;
  if (const char* env = std::getenv("INTENTKG_PORT")) {
    config.service_port = static_cast<int>(std::strtol(env, nullptr, 10));
  }
  if (seed) {
    config.seed = *seed;
    config.propagate_seed();
  }
  if (out_dir) config.paths.out_dir = *out_dir;
}

}  // namespace intentkg
