#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "intentkg/config.hpp"
#include "intentkg/errors.hpp"
#include "intentkg/pipeline.hpp"
#include "intentkg/service.hpp"

using namespace intentkg;
using nlohmann::json;

namespace {

void print_error(const std::string& code, const std::string& msg) {
  json j;
  j["error"]["code"] = code;
  j["error"]["msg"] = msg;
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"intentkg: concept-graph next-intent pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed_override;
  std::optional<std::string> out_override;
  uint64_t seed_value = 0;
  std::string out_value;
  app.add_option("--config", config_path, "pipeline config JSON");
  auto* seed_opt = app.add_option("--seed", seed_value, "seed override");
  auto* out_opt = app.add_option("--out", out_value, "output directory override");

  auto* cmd_simulate = app.add_subcommand("simulate", "generate world, logs and catalog");
  auto* cmd_build = app.add_subcommand("build-kg", "mine nodes from the item catalog");
  auto* cmd_mine = app.add_subcommand("mine-relations", "mine isA and Consequent relations");
  auto* cmd_matcher = app.add_subcommand("train-matcher", "train the item-intent matcher");
  auto* cmd_predictor = app.add_subcommand("train-predictor", "train fused + plain predictors");
  auto* cmd_evaluate = app.add_subcommand("evaluate", "run the offline evaluation");
  auto* cmd_serve = app.add_subcommand("serve", "start the HTTP service");
  auto* cmd_validate = app.add_subcommand("validate", "validate a graph file");
  std::string validate_graph;
  cmd_validate->add_option("--graph", validate_graph, "graph file (defaults to config path)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  PipelineConfig config;
  try {
    config = config_path.empty() ? default_pipeline_config() : load_pipeline_config(config_path);
    if (seed_opt->count()) seed_override = seed_value;
    if (out_opt->count()) out_override = out_value;
    apply_overrides(config, seed_override, out_override);
  } catch (const ConfigError& e) {
    print_error("CONFIG", e.what());
    return 2;
  } catch (const std::exception& e) {
    print_error("CONFIG", e.what());
    return 2;
  }

  try {
    if (cmd_simulate->parsed()) {
      step_simulate(config);
      std::cout << "world: " << config.world_path() << "\nlogs: " << config.logs_path()
                << "\ncatalog: " << config.catalog_path() << "\n";
    } else if (cmd_build->parsed()) {
      ConceptGraph g = step_build_kg(config);
      std::cout << "graph: " << config.graph_path() << " (" << g.node_count() << " nodes, "
                << g.edge_count() << " edges)\n";
    } else if (cmd_mine->parsed()) {
      step_mine_relations(config);
      std::cout << "candidates: " << config.candidates_consequent_path() << ", "
                << config.candidates_isa_path() << "\ngraph updated: " << config.graph_path()
                << "\n";
    } else if (cmd_matcher->parsed()) {
      double f1 = step_train_matcher(config);
      std::cout << "matcher: " << config.matcher_path() << "\nheld-out micro-F1: " << f1 << "\n";
    } else if (cmd_predictor->parsed()) {
      step_train_predictor(config);
      std::cout << "predictors: " << config.predictor_fused_path() << ", "
                << config.predictor_plain_path() << "\n";
    } else if (cmd_evaluate->parsed()) {
      std::string report = step_evaluate(config);
      json j = json::parse(report);
      std::cout << "ablation grid (recall@1 / recall@10):\n";
      for (const json& row : j.at("ablation")) {
        std::printf("  %-12s %.4f / %.4f\n", row.at("name").get<std::string>().c_str(),
                    row.at("recall@1").get<double>(), row.at("recall@10").get<double>());
      }
      std::printf("recsys hit-rate@N: full %.4f, popularity %.4f\n",
                  j.at("recsys").at("full").at("hit_rate").get<double>(),
                  j.at("recsys").at("popularity").at("hit_rate").get<double>());
      std::cout << "demo buy-snacks-in-top-k: "
                << (j.at("demo").value("buy_snacks_in_top_k", false) ? "yes" : "no") << "\n";
      std::cout << "report: " << config.eval_report_path() << "\n";
    } else if (cmd_serve->parsed()) {
      ServiceState state = ServiceState::load(config);
      std::cout << "listening on port " << config.service_port << "\n";
      return run_service(state, config.service_port);
    } else if (cmd_validate->parsed()) {
      std::string path = validate_graph.empty() ? config.graph_path() : validate_graph;
      return step_validate(path) == 0 ? 0 : 1;
    }
  } catch (const ConfigError& e) {
    print_error("CONFIG", e.what());
    return 2;
  } catch (const ParseError& e) {
    print_error("PARSE", e.what());
    return 1;
  } catch (const OntologyError& e) {
    print_error("ONTOLOGY", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("RUNTIME", e.what());
    return 1;
  }
  return 0;
}
