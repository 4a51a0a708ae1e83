#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "intentkg/graph.hpp"
#include "intentkg/util.hpp"

using namespace intentkg;

namespace {

// Exhaustive DFS over Consequent edges, independent of the implementation.
void brute_paths(const ConceptGraph& g, NodeId cur, int depth_left, std::vector<NodeId>& path,
                 std::set<NodeId>& seen, std::vector<std::vector<NodeId>>& out) {
  if (depth_left == 0) return;
  for (const Edge& e : g.edges()) {
    if (e.kind != EdgeKind::Consequent || e.src != cur || seen.count(e.dst)) continue;
    path.push_back(e.dst);
    seen.insert(e.dst);
    out.push_back(path);
    brute_paths(g, e.dst, depth_left - 1, path, seen, out);
    seen.erase(e.dst);
    path.pop_back();
  }
}

}  // namespace

TEST_CASE("add_node upsert and idempotence") {
  ConceptGraph g;
  NodeId n1 = g.add_node(NodeKind::Intent, "buy movie tickets");
  CHECK(g.node_count() == 1);
  NodeId n2 = g.add_node(NodeKind::Intent, "buy movie tickets");
  CHECK(n1 == n2);
  CHECK(g.node_count() == 1);
  // canonicalization folds case and whitespace
  NodeId n3 = g.add_node(NodeKind::Intent, "  Buy   Movie  Tickets ");
  CHECK(n3 == n1);

  NodeId p = g.add_node(NodeKind::Product, "movie ticket", {"电影票"});
  CHECK(g.node(p).aliases.count("电影票") == 1);
  // same label, different kind is a distinct node
  CHECK(p != n1);

  CHECK_THROWS_AS(g.add_node(NodeKind::Intent, "   "), LookupError);
}

TEST_CASE("add_edge enforces the relation schema") {
  ConceptGraph g;
  NodeId rent_i13 = g.add_node(NodeKind::Intent, "rent an iphone13");
  NodeId rent_phone = g.add_node(NodeKind::Intent, "rent a mobile phone");
  NodeId buy_house = g.add_node(NodeKind::Intent, "buy a house");
  NodeId renovate = g.add_node(NodeKind::Intent, "renovate a house");
  NodeId product = g.add_node(NodeKind::Product, "iphone13");

  CHECK_NOTHROW(g.add_edge(rent_i13, EdgeKind::IsA, rent_phone));
  CHECK_NOTHROW(g.add_edge(buy_house, EdgeKind::Consequent, renovate));
  CHECK_THROWS_AS(g.add_edge(rent_i13, EdgeKind::IsA, product), OntologyError);
  CHECK_THROWS_AS(g.add_edge(buy_house, EdgeKind::Consequent, buy_house), OntologyError);
  CHECK_THROWS_AS(g.add_edge(product, EdgeKind::Consequent, rent_i13), OntologyError);
  CHECK_THROWS_AS(g.add_edge(rent_i13, EdgeKind::Has, product), OntologyError);

  // unknown endpoints
  CHECK_THROWS_AS(g.add_edge(rent_i13, EdgeKind::IsA, 999), LookupError);
  // confidence bounds
  CHECK_THROWS_AS(g.add_edge(rent_phone, EdgeKind::IsA, rent_i13, 1.5), OntologyError);
}

TEST_CASE("isA cycles are refused with the would-be path") {
  ConceptGraph g;
  NodeId a = g.add_node(NodeKind::Intent, "a");
  NodeId b = g.add_node(NodeKind::Intent, "b");
  g.add_edge(a, EdgeKind::IsA, b);
  try {
    g.add_edge(b, EdgeKind::IsA, a);
    FAIL("expected CycleError");
  } catch (const CycleError& e) {
    CHECK(e.cycle_path == std::vector<NodeId>{b, a, b});
  }
  // longer cycle
  NodeId c = g.add_node(NodeKind::Intent, "c");
  g.add_edge(b, EdgeKind::IsA, c);
  CHECK_THROWS_AS(g.add_edge(c, EdgeKind::IsA, a), CycleError);
  // multiple parents stay legal
  NodeId d = g.add_node(NodeKind::Intent, "d");
  CHECK_NOTHROW(g.add_edge(a, EdgeKind::IsA, d));
}

TEST_CASE("validate_graph reports findings with machine codes") {
  ConceptGraph g;
  CHECK(g.validate().ok());  // empty graph

  NodeId a = g.add_node(NodeKind::Intent, "eat");
  NodeId f = g.add_node(NodeKind::Function, "eat");
  g.add_edge(a, EdgeKind::Consist, f);
  CHECK(g.validate().ok());

  // missing consist is a warning, not a finding
  g.add_node(NodeKind::Intent, "drift");
  ValidationReport r = g.validate();
  CHECK(r.ok());
  REQUIRE(r.warnings.size() == 1);
  CHECK(r.warnings[0].code == "MISSING_CONSIST");
}

TEST_CASE("validate catches an injected self-loop") {
  // bypass add_edge by crafting a record file
  std::string content =
      "{\"t\":\"node\",\"id\":0,\"kind\":\"Intent\",\"label\":\"pay\"}\n"
      "{\"t\":\"edge\",\"src\":0,\"kind\":\"consequent\",\"dst\":0}\n";
  CHECK_THROWS_AS(parse_graph(content), OntologyError);
}

TEST_CASE("fuzzed build sequences always validate clean") {
  Rng rng(20240811);
  for (int round = 0; round < 50; ++round) {
    ConceptGraph g;
    std::vector<NodeId> ids;
    for (int step = 0; step < 60; ++step) {
      if (ids.empty() || rng.next_below(3) == 0) {
        NodeKind kind = static_cast<NodeKind>(rng.next_below(4));
        ids.push_back(g.add_node(kind, "n" + std::to_string(rng.next_below(30))));
      } else {
        NodeId src = ids[rng.next_below(ids.size())];
        NodeId dst = ids[rng.next_below(ids.size())];
        EdgeKind kind = static_cast<EdgeKind>(rng.next_below(4));
        try {
          g.add_edge(src, kind, dst, rng.next_double());
        } catch (const OntologyError&) {
        } catch (const CycleError&) {
        }
      }
    }
    ValidationReport r = g.validate();
    CHECK(r.findings.empty());
  }
}

TEST_CASE("consequent_chains matches the worked example") {
  ConceptGraph g;
  NodeId taxi = g.add_node(NodeKind::Intent, "take an internet taxi");
  NodeId tickets = g.add_node(NodeKind::Intent, "buy movie tickets");
  NodeId snacks = g.add_node(NodeKind::Intent, "buy snacks");
  g.add_edge(taxi, EdgeKind::Consequent, tickets, 0.9);
  g.add_edge(tickets, EdgeKind::Consequent, snacks, 0.85);

  auto chains = g.consequent_chains(taxi, 2);
  REQUIRE(chains.size() == 2);
  CHECK(chains[0] == std::vector<NodeId>{taxi, tickets});
  CHECK(chains[1] == std::vector<NodeId>{taxi, tickets, snacks});

  // isolated intent
  NodeId lone = g.add_node(NodeKind::Intent, "recharge phone credit");
  CHECK(g.consequent_chains(lone, 3).empty());

  // wrong kind / missing node
  NodeId prod = g.add_node(NodeKind::Product, "snacks");
  CHECK_THROWS_AS(g.consequent_chains(prod, 2), LookupError);
  CHECK_THROWS_AS(g.consequent_chains(404, 2), LookupError);
}

TEST_CASE("consequent_chains equals brute-force enumeration on small graphs") {
  Rng rng(99);
  for (int round = 0; round < 30; ++round) {
    ConceptGraph g;
    std::vector<NodeId> intents;
    int n = 3 + static_cast<int>(rng.next_below(6));  // <= 8 intents
    for (int i = 0; i < n; ++i) {
      intents.push_back(g.add_node(NodeKind::Intent, "i" + std::to_string(i)));
    }
    for (int e = 0; e < 2 * n; ++e) {
      NodeId s = intents[rng.next_below(intents.size())];
      NodeId d = intents[rng.next_below(intents.size())];
      if (s == d) continue;
      g.add_edge(s, EdgeKind::Consequent, d, 0.5 + 0.5 * rng.next_double());
    }
    int depth = 1 + static_cast<int>(rng.next_below(3));
    auto got = g.consequent_chains(intents[0], depth);
    std::vector<std::vector<NodeId>> want;
    std::vector<NodeId> path{intents[0]};
    std::set<NodeId> seen{intents[0]};
    brute_paths(g, intents[0], depth, path, seen, want);
    // compare as sets (ordering is checked elsewhere)
    auto key = [](const std::vector<NodeId>& p) { return p; };
    std::set<std::vector<NodeId>> sg, sw;
    for (auto& p : got) sg.insert(key(p));
    for (auto& p : want) sw.insert(key(p));
    CHECK(sg == sw);
    // diamond dedup sanity: no duplicates in got
    CHECK(sg.size() == got.size());
    // ordering: by (length, confidence product desc)
    for (size_t i = 1; i < got.size(); ++i) {
      CHECK(got[i - 1].size() <= got[i].size());
    }
  }
}

TEST_CASE("save/load round-trip is structural identity") {
  ConceptGraph g = load_graph(std::string(INTENTKG_DATA_DIR) + "/fig1a.jsonl");
  CHECK(g.validate().ok());
  std::string ser = serialize_graph(g);
  ConceptGraph back = parse_graph(ser);
  CHECK(g.structurally_equal(back));
  CHECK(serialize_graph(back) == ser);  // bit-stable second round
  CHECK(g.fingerprint() == back.fingerprint());
}

TEST_CASE("loader reports line numbers for malformed and invalid records") {
  // truncated json on line 2
  std::string truncated =
      "{\"t\":\"node\",\"id\":0,\"kind\":\"Intent\",\"label\":\"a\"}\n"
      "{\"t\":\"node\",\"id\":1,\"kind\":\"Int";
  try {
    parse_graph(truncated);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 2);
  }

  // schema-violating edge on line 3
  std::string bad_edge =
      "{\"t\":\"node\",\"id\":0,\"kind\":\"Intent\",\"label\":\"a\"}\n"
      "{\"t\":\"node\",\"id\":1,\"kind\":\"Sememe\",\"label\":\"s\"}\n"
      "{\"t\":\"edge\",\"src\":0,\"kind\":\"has\",\"dst\":1}\n";
  try {
    parse_graph(bad_edge);
    FAIL("expected OntologyError");
  } catch (const OntologyError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("frozen graphs refuse mutation") {
  ConceptGraph g;
  NodeId a = g.add_node(NodeKind::Intent, "a");
  g.freeze();
  CHECK_THROWS_AS(g.add_node(NodeKind::Intent, "b"), std::logic_error);
  CHECK_THROWS_AS(g.set_attr(a, "k", "v"), std::logic_error);
}

TEST_CASE("isA subgraph stays topologically sortable under accepted inserts") {
  Rng rng(7);
  ConceptGraph g;
  std::vector<NodeId> intents;
  for (int i = 0; i < 30; ++i) {
    intents.push_back(g.add_node(NodeKind::Intent, "i" + std::to_string(i)));
  }
  int accepted = 0;
  for (int e = 0; e < 300; ++e) {
    NodeId s = intents[rng.next_below(intents.size())];
    NodeId d = intents[rng.next_below(intents.size())];
    if (s == d) continue;
    try {
      g.add_edge(s, EdgeKind::IsA, d);
      ++accepted;
    } catch (const CycleError&) {
    }
    CHECK(g.validate().findings.empty());
  }
  CHECK(accepted > 0);
}
