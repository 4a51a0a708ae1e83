#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "intentkg/bayes.hpp"
#include "intentkg/events.hpp"
#include "intentkg/util.hpp"

using namespace intentkg;

namespace {

UserEvent ev(const std::string& user, int64_t ts, const std::string& intent) {
  UserEvent e;
  e.user = user;
  e.ts = ts;
  e.location = "loc0";
  e.intent = intent;
  return e;
}

// Sessions with a planted conditional: P(dst later | src seen) = p_follow,
// baseline P(dst) = p_base per session.
std::vector<Session> planted_sessions(int n, double p_src, double p_follow, double p_base,
                                      uint64_t seed) {
  Rng rng(seed);
  std::vector<Session> out;
  for (int i = 0; i < n; ++i) {
    Session s;
    s.user = "u" + std::to_string(i);
    int64_t t = 1000000 + i * 10000;
    auto push = [&](const std::string& intent) { s.events.push_back(ev(s.user, t += 60, intent)); };
    push("filler" + std::to_string(rng.next_below(6)));
    bool has_src = rng.next_double() < p_src;
    if (has_src) {
      push("tickets");
      if (rng.next_double() < p_follow) push("snacks");
    } else if (rng.next_double() < p_base) {
      push("snacks");
    }
    push("filler" + std::to_string(rng.next_below(6)));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("segment_sessions splits on gap and max_len") {
  std::vector<UserEvent> events{ev("u1", 0, "a"), ev("u1", 100, "b"), ev("u1", 5000, "c")};
  auto sessions = segment_sessions(events, 1000, 50);
  REQUIRE(sessions.size() == 2);
  CHECK(sessions[0].events.size() == 2);
  CHECK(sessions[1].events.size() == 1);

  // max_len cap
  std::vector<UserEvent> burst;
  for (int i = 0; i < 10; ++i) burst.push_back(ev("u1", i, "x"));
  auto capped = segment_sessions(burst, 1000, 4);
  REQUIRE(capped.size() == 3);
  CHECK(capped[0].events.size() == 4);
  CHECK(capped[2].events.size() == 2);

  CHECK(segment_sessions({}, 1000, 10).empty());
  CHECK_THROWS_AS(segment_sessions(events, 0, 10), std::invalid_argument);
}

TEST_CASE("segment_sessions partitions random events exactly") {
  Rng rng(5150);
  std::vector<UserEvent> events;
  for (int i = 0; i < 10000; ++i) {
    UserEvent e = ev("u" + std::to_string(rng.next_below(40)),
                     static_cast<int64_t>(rng.next_below(1000000)),
                     "i" + std::to_string(rng.next_below(20)));
    events.push_back(e);
  }
  auto sessions = segment_sessions(events, 500, 7);
  size_t total = 0;
  std::multiset<std::tuple<std::string, int64_t, std::string>> in, out;
  for (const auto& e : events) in.insert({e.user, e.ts, e.intent});
  for (const auto& s : sessions) {
    CHECK(!s.events.empty());
    total += s.events.size();
    for (size_t i = 0; i < s.events.size(); ++i) {
      CHECK(s.events[i].user == s.user);
      if (i) CHECK(s.events[i].ts >= s.events[i - 1].ts);
      out.insert({s.events[i].user, s.events[i].ts, s.events[i].intent});
    }
  }
  CHECK(total == events.size());
  CHECK(in == out);  // exact multiset partition
}

TEST_CASE("event log round-trip and parse errors") {
  std::vector<UserEvent> events{ev("u1", 10, "buy snacks")};
  events[0].item = "item:4";
  auto back = parse_events(serialize_events(events));
  REQUIRE(back.size() == 1);
  CHECK(back[0].user == "u1");
  CHECK(back[0].intent == "buy snacks");
  CHECK(back[0].item == "item:4");

  CHECK_THROWS_AS(parse_events("{\"user\":\"u\",\"ts\":5}"), ParseError);     // no intent/item
  CHECK_THROWS_AS(parse_events("{\"user\":\"u\",\"intent\":\"x\"}"), ParseError);  // no ts
  try {
    parse_events("{\"user\":\"u\",\"ts\":1,\"intent\":\"x\"}\nnot json\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line_number == 2);
  }
}

TEST_CASE("mine_consequent recovers a strong planted conditional with the expected lift") {
  // P(snacks | tickets earlier) = 0.9 against base 0.1
  auto sessions = planted_sessions(10000, 0.5, 0.9, 0.1, 77);
  ConsequentConfig cfg;
  auto mined = mine_consequent(sessions, cfg);
  auto it = std::find_if(mined.begin(), mined.end(), [](const ScoredRelation& r) {
    return r.src == "tickets" && r.dst == "snacks";
  });
  REQUIRE(it != mined.end());
  // lift = P(snacks follows tickets) / P(snacks) = 0.9 / (0.5*0.9 + 0.5*0.1)
  double expected = 0.9 / (0.5 * 0.9 + 0.5 * 0.1);
  CHECK(it->score == doctest::Approx(expected).epsilon(0.1));
  // no reverse edge
  for (const auto& r : mined) {
    CHECK(!(r.src == "snacks" && r.dst == "tickets"));
  }
}

TEST_CASE("independent intents mine no edges") {
  Rng rng(11);
  std::vector<Session> sessions;
  for (int i = 0; i < 4000; ++i) {
    Session s;
    s.user = "u" + std::to_string(i);
    int64_t t = 5000 + i * 1000;
    for (int k = 0; k < 4; ++k) {
      s.events.push_back(ev(s.user, t += 30, "i" + std::to_string(rng.next_below(8))));
    }
    sessions.push_back(std::move(s));
  }
  ConsequentConfig cfg;
  CHECK(mine_consequent(sessions, cfg).empty());
}

TEST_CASE("temporal shuffle kills every mined edge") {
  auto sessions = planted_sessions(8000, 0.5, 0.85, 0.1, 31);
  ConsequentConfig cfg;
  CHECK(!mine_consequent(sessions, cfg).empty());

  Rng rng(99);
  for (auto& s : sessions) {
    std::vector<std::string> intents;
    for (auto& e : s.events) intents.push_back(e.intent);
    rng.shuffle(intents);
    for (size_t i = 0; i < intents.size(); ++i) s.events[i].intent = intents[i];
  }
  CHECK(mine_consequent(sessions, cfg).empty());
}

TEST_CASE("mine_consequent preconditions and determinism") {
  ConsequentConfig cfg;
  CHECK_THROWS_AS(mine_consequent({}, cfg), std::invalid_argument);

  Session unlabeled;
  unlabeled.user = "u";
  UserEvent e;
  e.user = "u";
  e.ts = 1;
  e.item = "item:1";
  unlabeled.events.push_back(e);
  CHECK_THROWS_AS(mine_consequent({unlabeled}, cfg), std::invalid_argument);

  // single-intent vocabulary -> empty
  Session mono;
  mono.user = "u";
  mono.events = {ev("u", 1, "only"), ev("u", 2, "only")};
  CHECK(mine_consequent({mono}, cfg).empty());

  auto sessions = planted_sessions(3000, 0.5, 0.8, 0.1, 3);
  auto a = mine_consequent(sessions, cfg);
  auto b = mine_consequent(sessions, cfg);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].src == b[i].src);
    CHECK(a[i].dst == b[i].dst);
    CHECK(a[i].score == b[i].score);  // bit-equal
  }
}

TEST_CASE("structure search prefers the dependent pair") {
  // two correlated variables, one independent
  Rng rng(13);
  std::vector<std::vector<uint64_t>> rows;
  for (int i = 0; i < 5000; ++i) {
    uint64_t a = rng.next_below(2);
    uint64_t b = rng.next_double() < (a ? 0.85 : 0.1) ? 1 : 0;
    uint64_t c = rng.next_below(2);
    rows.push_back({a | (b << 1) | (c << 2)});
  }
  BayesNet net = learn_structure(rows, 3, 2, 2, 7);
  bool linked01 = false;
  for (int v = 0; v < 3; ++v) {
    for (int p : net.parents[v]) {
      int lo = std::min(v, p), hi = std::max(v, p);
      if (lo == 0 && hi == 1) linked01 = true;
      CHECK(!(lo == 0 && hi == 2));
      CHECK(!(lo == 1 && hi == 2));
    }
  }
  CHECK(linked01);
}
