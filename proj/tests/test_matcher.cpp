#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "intentkg/gcn.hpp"
#include "intentkg/matcher.hpp"
#include "intentkg/util.hpp"

using namespace intentkg;

namespace {

struct Fixture {
  ConceptGraph graph;
  TextEncoder encoder;
  IntentEmbeddingTable table;
  std::vector<LabeledItem> data;
};

// Small catalog over a handful of intents; item text embeds the label plus
// brand/noise words.
Fixture make_fixture(int items_per_intent = 8) {
  Fixture f;
  std::vector<std::string> labels = {"order coffee",      "buy coffee beans", "buy movie tickets",
                                     "take internet taxi", "pay electricity bill",
                                     "rent a camera"};
  std::vector<NodeId> nodes;
  for (const std::string& l : labels) nodes.push_back(f.graph.add_node(NodeKind::Intent, l));
  f.graph.add_edge(nodes[0], EdgeKind::Consequent, nodes[1]);
  f.graph.add_edge(nodes[3], EdgeKind::Consequent, nodes[2]);

  GcnConfig gcn;
  gcn.hidden_dim = 32;
  gcn.out_dim = 32;
  f.table = build_intent_embeddings(f.graph, f.encoder, gcn);

  const char* brands[] = {"cityapp", "quickgo", "sunmart", "goodday"};
  const char* noise[] = {"official", "online", "express", "daily"};
  Rng rng(404);
  int n = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    for (int k = 0; k < items_per_intent; ++k) {
      LabeledItem li;
      li.item.id = "item:" + std::to_string(n++);
      li.item.kind = ItemKind::Service;
      li.item.text = std::string(brands[rng.next_below(4)]) + " " + labels[i] + " " +
                     noise[rng.next_below(4)];
      li.positives.push_back(nodes[i]);
      f.data.push_back(std::move(li));
    }
  }
  return f;
}

}  // namespace

TEST_CASE("score_item_intent basics") {
  MatcherParams params;
  params.projection = Mat(4, 3);
  params.bias = 0.0;
  std::vector<double> u{1.0, -0.5, 0.25, 0.0};
  std::vector<double> v{0.5, 0.5, -1.0};
  // zero projection, zero bias -> exactly 0.5
  CHECK(score_item_intent(u, v, params) == 0.5);

  // monotone in bias
  params.bias = 1.0;
  double hi = score_item_intent(u, v, params);
  params.bias = -1.0;
  double lo = score_item_intent(u, v, params);
  CHECK(lo < 0.5);
  CHECK(hi > 0.5);

  // shape mismatch
  CHECK_THROWS_AS(score_item_intent({1.0}, v, params), DimensionError);

  // order invariance under positive rescaling of the item vector
  Rng rng(8);
  for (double& x : params.projection.data()) x = rng.next_double() - 0.5;
  std::vector<double> v2{-0.3, 0.8, 0.1};
  double s1 = score_item_intent(u, v, params);
  double s2 = score_item_intent(u, v2, params);
  std::vector<double> u_scaled = u;
  for (double& x : u_scaled) x *= 7.5;
  params.bias = 0.0;
  double t1 = score_item_intent(u_scaled, v, params);
  double t2 = score_item_intent(u_scaled, v2, params);
  CHECK((s1 > s2) == (t1 > t2));
}

TEST_CASE("zero-initialized training starts at -log(0.5)") {
  Fixture f = make_fixture(2);
  MatcherConfig cfg;
  cfg.epochs = 1;
  MatcherParams params = train_matcher(f.data, f.table, f.encoder, cfg);
  REQUIRE(!params.loss_curve.empty());
  CHECK(params.loss_curve[0] == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("training loss decreases over the first 10 epochs") {
  Fixture f = make_fixture(6);
  MatcherConfig cfg;
  cfg.epochs = 12;
  MatcherParams params = train_matcher(f.data, f.table, f.encoder, cfg);
  for (int e = 1; e <= 10; ++e) {
    CHECK(params.loss_curve[e] < params.loss_curve[e - 1]);
  }
}

TEST_CASE("one item, one intent overfits to a confident score") {
  ConceptGraph g;
  NodeId n = g.add_node(NodeKind::Intent, "order coffee");
  TextEncoder enc;
  GcnConfig gcn;
  gcn.hidden_dim = 16;
  gcn.out_dim = 16;
  IntentEmbeddingTable table = build_intent_embeddings(g, enc, gcn);

  LabeledItem li;
  li.item.id = "item:0";
  li.item.text = "starbucks order coffee";
  li.positives.push_back(n);

  MatcherConfig cfg;
  cfg.epochs = 200;
  MatcherParams params = train_matcher({li}, table, enc, cfg);
  std::vector<double> u = encode_item(li.item, enc, 0);
  CHECK(score_item_intent(u, table.vector_for(n), params) >= 0.9);
}

TEST_CASE("analytic gradients match central differences") {
  Fixture f = make_fixture(1);  // 6 items
  std::vector<LabeledItem> five(f.data.begin(), f.data.begin() + 5);

  MatcherConfig cfg;
  MatcherParams params;
  params.config = cfg;
  params.projection = Mat(f.encoder.config().dim, f.table.dim());
  params.bias = 0.0;
  CHECK(matcher_gradient_check(params, five, f.table, f.encoder, 1e-5) < 1e-4);

  // seeded random parameters
  Rng rng(21);
  for (double& v : params.projection.data()) v = rng.next_double() - 0.5;
  params.bias = 0.3;
  CHECK(matcher_gradient_check(params, five, f.table, f.encoder, 1e-5) < 1e-4);

  // asymmetric loss branch
  params.config.loss = MatchLoss::Asymmetric;
  params.config.gamma_pos = 0.5;
  params.config.gamma_neg = 2.0;
  CHECK(matcher_gradient_check(params, five, f.table, f.encoder, 1e-5) < 1e-4);

  // a 10x larger epsilon degrades the numeric side
  double tight = matcher_gradient_check(params, five, f.table, f.encoder, 1e-5);
  double loose = matcher_gradient_check(params, five, f.table, f.encoder, 1e-1);
  CHECK(loose > tight);
}

TEST_CASE("label_item respects threshold, top_k and tie order") {
  Fixture f = make_fixture(6);
  MatcherConfig cfg;
  cfg.loss = MatchLoss::Asymmetric;
  cfg.weight_decay = 1e-3;
  cfg.epochs = 400;
  MatcherParams params = train_matcher(f.data, f.table, f.encoder, cfg);

  Item probe = f.data[0].item;  // "order coffee" item
  CHECK(label_item(probe, f.table, params, f.encoder, 10, 1.0).empty());  // unreachable

  auto top1 = label_item(probe, f.table, params, f.encoder, 1, 0.0);
  REQUIRE(top1.size() == 1);
  auto all = label_item(probe, f.table, params, f.encoder, 100, 0.0);
  CHECK(all.size() == f.table.intent_order.size());
  CHECK(top1[0].intent == all[0].intent);
  for (size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].score >= all[i].score);

  // every produced score lives strictly inside (0,1)
  for (const auto& s : all) {
    CHECK(s.score > 0.0);
    CHECK(s.score < 1.0);
  }
}

TEST_CASE("trained fixture ranks the right intent first") {
  Fixture f = make_fixture(8);
  MatcherConfig cfg;
  cfg.loss = MatchLoss::Asymmetric;
  cfg.weight_decay = 1e-3;
  cfg.epochs = 500;
  MatcherParams params = train_matcher(f.data, f.table, f.encoder, cfg);

  Item starbucks;
  starbucks.id = "probe";
  starbucks.kind = ItemKind::Service;
  starbucks.text = "starbucks applet order coffee";
  auto ranked = label_item(starbucks, f.table, params, f.encoder, 3, 0.0);
  REQUIRE(!ranked.empty());
  NodeId coffee = f.graph.find_by_label(NodeKind::Intent, "order coffee");
  NodeId movies = f.graph.find_by_label(NodeKind::Intent, "buy movie tickets");
  CHECK(ranked[0].intent == coffee);

  std::vector<double> u = encode_item(starbucks, f.encoder, 0);
  CHECK(score_item_intent(u, f.table.vector_for(coffee), params) >
        score_item_intent(u, f.table.vector_for(movies), params));
}

TEST_CASE("training rejects bad inputs") {
  Fixture f = make_fixture(2);
  MatcherConfig cfg;
  CHECK_THROWS_AS(train_matcher({}, f.table, f.encoder, cfg), std::invalid_argument);

  LabeledItem bad = f.data[0];
  bad.positives = {9999};  // not in the table
  CHECK_THROWS_AS(train_matcher({bad}, f.table, f.encoder, cfg), LookupError);
}

TEST_CASE("matcher params round-trip bit-exactly") {
  Fixture f = make_fixture(2);
  MatcherConfig cfg;
  cfg.epochs = 50;
  MatcherParams params = train_matcher(f.data, f.table, f.encoder, cfg);
  MatcherParams back = parse_matcher(serialize_matcher(params));
  CHECK(back.projection == params.projection);
  CHECK(back.bias == params.bias);
  CHECK(back.config.epochs == params.config.epochs);
  // identical training run is bit-reproducible
  MatcherParams again = train_matcher(f.data, f.table, f.encoder, cfg);
  CHECK(again.projection == params.projection);
}

TEST_CASE("image vectors concatenate behind the text features") {
  TextEncoder enc;
  Item with_img;
  with_img.id = "x";
  with_img.text = "order coffee";
  with_img.image_vec = {0.5, -0.25};
  std::vector<double> v = encode_item(with_img, enc, 2);
  REQUIRE(static_cast<int>(v.size()) == enc.config().dim + 2);
  CHECK(v[v.size() - 2] == 0.5);
  CHECK(v[v.size() - 1] == -0.25);

  // absent image pads with zeros
  Item text_only;
  text_only.id = "y";
  text_only.text = "order coffee";
  std::vector<double> w = encode_item(text_only, enc, 2);
  CHECK(w[w.size() - 2] == 0.0);
  CHECK(w[w.size() - 1] == 0.0);

  Item empty;
  empty.id = "z";
  CHECK_THROWS_AS(encode_item(empty, enc, 0), std::invalid_argument);
}
