#pragma once

#include <cstdint>
#include <string>

#include "intentkg/bayes.hpp"
#include "intentkg/gcn.hpp"
#include "intentkg/matcher.hpp"
#include "intentkg/predictor.hpp"
#include "intentkg/simulator.hpp"
#include "intentkg/text.hpp"

namespace intentkg {

// Whole-pipeline configuration. Parsing is strict: unknown keys anywhere are
// errors. Environment overrides: INTENTKG_SEED, INTENTKG_OUT, INTENTKG_PORT.
struct PipelineConfig {
  struct Paths {
    std::string out_dir = "out";
    std::string lexicon;  // required input for build-kg
    std::string graph, world, logs, catalog, product_isa;
    std::string candidates_consequent, candidates_isa;
    std::string embeddings, matcher, predictor_fused, predictor_plain;
    std::string eval_report;
  } paths;

  struct Mining {
    int64_t gap_seconds = 3600;
    int max_len = 50;
    ConsequentConfig consequent;
    double isa_tau = 0.5;       // embedding miner similarity floor
    int isa_top_k = 5;
    double isa_accept = 0.98;   // auto-accept floor for embedding isA candidates
    double align_tau = 0.9;     // node alignment threshold
    double accept_threshold = 1.5;  // auto-accept floor for consequent candidates (lift)
  } mining;

  struct Simulation {
    WorldConfig world;
    int n_users = 600;
    int events_per_user = 24;
  } sim;

  TextEncoderConfig encoder;
  GcnConfig gcn;
  MatcherConfig matcher;
  PredictorConfig predictor;
  EvalConfig eval;
  int service_port = 8080;
  uint64_t seed = 7;

  // Resolved artifact locations (explicit path or out_dir default).
  std::string graph_path() const;
  std::string world_path() const;
  std::string logs_path() const;
  std::string catalog_path() const;
  std::string product_isa_path() const;
  std::string candidates_consequent_path() const;
  std::string candidates_isa_path() const;
  std::string embeddings_path() const;
  std::string matcher_path() const;
  std::string predictor_fused_path() const;
  std::string predictor_plain_path() const;
  std::string eval_report_path() const;

  // Re-seeds every component config from `seed`.
  void propagate_seed();
};

PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::string& path);
PipelineConfig default_pipeline_config();

// Applies INTENTKG_* environment overrides and optional CLI overrides.
void apply_overrides(PipelineConfig& config, const std::optional<uint64_t>& seed,
                     const std::optional<std::string>& out_dir);

}  // namespace intentkg
