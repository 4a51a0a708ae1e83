#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "intentkg/lexicon.hpp"
#include "intentkg/simulator.hpp"
#include "intentkg/util.hpp"

using namespace intentkg;

namespace {

// graph matching the world, as the pipeline's build-kg + mine-relations
// stages would produce it
ConceptGraph graph_for(const SyntheticWorld& world) {
  ConceptGraph g;
  Lexicon lex = load_lexicon(std::string(INTENTKG_DATA_DIR) + "/lexicon.json");
  for (size_t i = 0; i < world.intent_labels.size(); ++i) {
    NodeId intent = g.add_node(NodeKind::Intent, world.intent_labels[i]);
    NodeId f = g.add_node(NodeKind::Function, world.functions[i]);
    NodeId p = g.add_node(NodeKind::Product, world.products[i]);
    g.add_edge(intent, EdgeKind::Consist, f);
    g.add_edge(intent, EdgeKind::Consist, p);
    for (const auto& s : assign_sememes(world.products[i], lex)) {
      NodeId sn = g.add_node(NodeKind::Sememe, s);
      g.add_edge(p, EdgeKind::Has, sn);
    }
  }
  for (const PlantedEdge& e : world.planted) {
    g.add_edge(g.find_by_label(NodeKind::Intent, world.intent_labels[e.src]),
               EdgeKind::Consequent,
               g.find_by_label(NodeKind::Intent, world.intent_labels[e.dst]), 0.9,
               Provenance::Bayesian);
  }
  return g;
}

struct TrainedStack {
  SyntheticWorld world;
  ConceptGraph graph;
  TextEncoder encoder;
  IntentEmbeddingTable table;
  MatcherParams matcher;

  TrainedStack() : world(generate_world(WorldConfig{})), graph(graph_for(world)),
                   encoder(TextEncoderConfig{128}) {
    GcnConfig gcn;
    table = build_intent_embeddings(graph, encoder, gcn);
    std::vector<LabeledItem> data;
    for (const CatalogItem& ci : world.catalog) {
      LabeledItem li;
      li.item = Item{ci.id, ci.kind, ci.text, {}};
      for (int slot : ci.intents) {
        li.positives.push_back(
            graph.find_by_label(NodeKind::Intent, world.intent_labels[slot]));
      }
      data.push_back(std::move(li));
    }
    MatcherConfig mc;
    mc.loss = MatchLoss::Asymmetric;
    mc.weight_decay = 1e-3;
    mc.epochs = 400;
    matcher = train_matcher(data, table, encoder, mc);
  }

  RecsysComponents components() const {
    RecsysComponents c;
    c.matcher = &matcher;
    c.table = &table;
    c.graph = &graph;
    c.encoder = &encoder;
    return c;
  }
};

}  // namespace

TEST_CASE("generate_world is deterministic and passes its own audit") {
  WorldConfig cfg;
  SyntheticWorld a = generate_world(cfg);
  SyntheticWorld b = generate_world(cfg);
  CHECK(serialize_world(a) == serialize_world(b));
  CHECK_NOTHROW(a.audit());
  CHECK(static_cast<int>(a.planted.size()) == cfg.n_planted);
  for (const PlantedEdge& e : a.planted) CHECK(e.src != e.dst);

  // normalization audit: conditional rows sum to one
  for (int prev = 0; prev < cfg.n_intents; ++prev) {
    std::vector<double> p = a.next_dist(prev, 12, 3, 0);
    double sum = 0.0;
    for (double v : p) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("world config edge cases") {
  WorldConfig cfg;
  cfg.n_planted = 0;
  CHECK_THROWS_AS(generate_world(cfg), ConfigError);
  cfg.allow_independent = true;
  SyntheticWorld plain = generate_world(cfg);
  CHECK(plain.planted.empty());

  WorldConfig tiny;
  tiny.n_intents = 4;
  CHECK_THROWS_AS(generate_world(tiny), ConfigError);

  WorldConfig squeezed;
  squeezed.n_intents = 6;
  squeezed.n_planted = 12;
  CHECK_THROWS_AS(generate_world(squeezed), ConfigError);

  // over-constrained lift
  WorldConfig hard;
  hard.chain_prob = 0.05;
  hard.lift = 3.0;
  CHECK_THROWS_AS(generate_world(hard), ConfigError);
}

TEST_CASE("generate_logs determinism and degenerate sizes") {
  SyntheticWorld world = generate_world(WorldConfig{});
  CHECK(generate_logs(world, 0, 10, 7).empty());
  auto a = generate_logs(world, 20, 15, 7);
  auto b = generate_logs(world, 20, 15, 7);
  CHECK(serialize_events(a) == serialize_events(b));
  auto c = generate_logs(world, 20, 15, 8);
  CHECK(serialize_events(a) != serialize_events(c));
  for (const UserEvent& e : a) {
    CHECK(!e.intent.empty());
    CHECK(!e.item.empty());
  }
}

TEST_CASE("empirical next-step conditional matches the planted tables") {
  SyntheticWorld world = generate_world(WorldConfig{});
  auto logs = generate_logs(world, 2500, 20, 7);
  auto sessions = segment_sessions(logs, 3600, 50);
  REQUIRE(sessions.size() > 9000);

  const PlantedEdge& edge = world.planted[1];  // tickets -> snacks
  double seen = 0.0, followed = 0.0;
  for (const Session& s : sessions) {
    for (size_t k = 0; k + 1 < s.events.size(); ++k) {
      if (s.events[k].intent == world.intent_labels[edge.src]) {
        seen += 1.0;
        if (s.events[k + 1].intent == world.intent_labels[edge.dst]) followed += 1.0;
      }
    }
  }
  REQUIRE(seen > 500);
  double expected = expected_next_prob(world, edge.src, edge.dst);
  CHECK(followed / seen == doctest::Approx(expected).epsilon(0.05));
  CHECK(std::fabs(followed / seen - expected) < 0.03);
}

TEST_CASE("weekend-modulated intents concentrate on weekends") {
  SyntheticWorld world = generate_world(WorldConfig{});
  REQUIRE(!world.weekend_intents.empty());
  int slot = world.weekend_intents[0];
  auto logs = generate_logs(world, 1500, 20, 7);
  std::vector<double> weekday_hist(7, 0.0);
  double total = 0.0;
  for (const UserEvent& e : logs) {
    if (e.intent != world.intent_labels[slot]) continue;
    weekday_hist[global_time_utc(e.ts).weekday] += 1.0;
    total += 1.0;
  }
  REQUIRE(total > 200);
  // chi-squared against uniform; 6 dof, p < 0.01 threshold = 16.812
  double chi2 = 0.0;
  for (double observed : weekday_hist) {
    double expected = total / 7.0;
    chi2 += (observed - expected) * (observed - expected) / expected;
  }
  CHECK(chi2 > 16.812);
  CHECK(weekday_hist[5] + weekday_hist[6] > 0.4 * total);
}

TEST_CASE("analytic bayes rate matches the oracle predictor on logs") {
  SyntheticWorld world = generate_world(WorldConfig{});
  double bayes = analytic_bayes_recall1(world);
  CHECK(bayes > 0.0);
  CHECK(bayes < 1.0);

  auto logs = generate_logs(world, 4000, 20, 7);
  auto split = split_temporal(logs, 3600);
  int hits = 0, total = 0;
  for (const HeldOutCase& h : split.held_out) {
    GlobalTime ctx = global_time_utc(h.context.front().ts);
    int loc = -1;
    for (size_t l = 0; l < world.locations.size(); ++l) {
      if (world.locations[l] == h.target.location) loc = static_cast<int>(l);
    }
    REQUIRE(loc >= 0);
    int prev = world.intent_slot(h.context.back().intent);
    REQUIRE(prev >= 0);
    auto dist = world.next_dist(prev, ctx.hour, ctx.weekday, loc);
    int argmax = 0;
    for (size_t b = 1; b < dist.size(); ++b) {
      if (dist[b] > dist[argmax]) argmax = static_cast<int>(b);
    }
    if (world.intent_labels[argmax] == h.target.intent) ++hits;
    ++total;
  }
  double oracle = static_cast<double>(hits) / total;
  CHECK(std::fabs(oracle - bayes) < 0.02);
}

TEST_CASE("recsys harness: oracle beats everything, random matches popularity") {
  TrainedStack stack;
  auto logs = generate_logs(stack.world, 800, 20, 7);
  EvalConfig cfg;
  RecsysComponents c = stack.components();

  EvalReport oracle = run_recsys(stack.world, logs, c, cfg, RecsysMode::OraclePredictor, 7);
  CHECK(oracle.hit_rate >= 0.9);
  CHECK(oracle.micro_f1 > 0.7);

  EvalReport pop = run_recsys(stack.world, logs, c, cfg, RecsysMode::PopularityOnly, 7);
  EvalReport random = run_recsys(stack.world, logs, c, cfg, RecsysMode::RandomPredictor, 7);
  CHECK(std::fabs(random.hit_rate - pop.hit_rate) <= 0.02);

  // hit-rate monotone in N
  EvalConfig wide = cfg;
  wide.hit_n = 50;
  EvalReport wider = run_recsys(stack.world, logs, c, cfg, RecsysMode::OraclePredictor, 7);
  EvalReport widest = run_recsys(stack.world, logs, c, wide, RecsysMode::OraclePredictor, 7);
  CHECK(widest.hit_rate >= wider.hit_rate);

  // untrained components are rejected
  RecsysComponents none;
  CHECK_THROWS_AS(run_recsys(stack.world, logs, none, cfg, RecsysMode::Full, 7),
                  std::invalid_argument);

  // report serialization carries config echo and seed
  CHECK(oracle.to_json().find("recall_pool") != std::string::npos);
  CHECK(oracle.to_table().find("hit-rate") != std::string::npos);
}

TEST_CASE("ranking with pool=catalog and w2=0 follows the match scores") {
  TrainedStack stack;
  auto logs = generate_logs(stack.world, 200, 16, 3);
  EvalConfig cfg;
  cfg.w2 = 0.0;
  RecsysComponents c = stack.components();

  std::vector<std::string> pool;
  for (const CatalogItem& item : stack.world.catalog) pool.push_back(item.id);
  std::vector<std::pair<std::string, double>> top{{stack.world.intent_labels[3], 0.7},
                                                  {stack.world.intent_labels[4], 0.3}};
  std::map<std::string, double> popularity;  // ignored at w2=0
  auto ranked = rank_items(stack.world, c, pool, top, popularity, cfg);
  REQUIRE(ranked.size() == pool.size());

  // independent recomputation of the expected ordering
  std::map<std::string, double> score;
  for (const CatalogItem& item : stack.world.catalog) {
    Item it{item.id, item.kind, item.text, {}};
    std::vector<double> u = encode_item(it, stack.encoder, 0);
    double s = 0.0;
    for (const auto& [label, p] : top) {
      NodeId node = stack.graph.find_by_label(NodeKind::Intent, label);
      s += p * score_item_intent(u, stack.table.vector_for(node), stack.matcher);
    }
    score[item.id] = s;
  }
  for (size_t i = 1; i < ranked.size(); ++i) {
    CHECK(score[ranked[i - 1]] >= score[ranked[i]] - 1e-12);
  }
}

TEST_CASE("feedback resampling duplicates only recommended items") {
  SyntheticWorld world = generate_world(WorldConfig{});
  auto logs = generate_logs(world, 50, 10, 7);
  std::set<std::string> recommended{logs[0].item};
  auto biased = feedback_resample(logs, recommended, 1.0, 9);
  CHECK(biased.size() > logs.size());
  auto unbiased = feedback_resample(logs, {}, 1.0, 9);
  CHECK(unbiased.size() == logs.size());
}

TEST_CASE("world serialization round-trips") {
  SyntheticWorld world = generate_world(WorldConfig{});
  SyntheticWorld back = parse_world(serialize_world(world));
  CHECK(serialize_world(back) == serialize_world(world));
  CHECK(back.intent_labels == world.intent_labels);
  CHECK(back.catalog.size() == world.catalog.size());
  CHECK(back.base_pop == world.base_pop);

  auto items = parse_catalog(serialize_catalog(world));
  CHECK(items.size() == world.catalog.size());
  CHECK(items[0].id == world.catalog[0].id);
}
