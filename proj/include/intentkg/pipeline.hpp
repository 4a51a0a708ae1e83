#pragma once

#include <string>

#include "intentkg/config.hpp"
#include "intentkg/graph.hpp"

namespace intentkg {

// Pipeline stages behind the CLI subcommands. Each stage reads and writes
// only the paths its name implies; all randomness comes from the config
// seed.
void step_simulate(const PipelineConfig& config);
ConceptGraph step_build_kg(const PipelineConfig& config);
void step_mine_relations(const PipelineConfig& config);
// Returns held-out micro-F1 of the trained matcher.
double step_train_matcher(const PipelineConfig& config);
void step_train_predictor(const PipelineConfig& config);
// Returns the report JSON (also written to eval_report_path).
std::string step_evaluate(const PipelineConfig& config);
// Returns the number of validation findings.
int step_validate(const std::string& graph_path);

void require_input(const std::string& path, const std::string& what);

}  // namespace intentkg
