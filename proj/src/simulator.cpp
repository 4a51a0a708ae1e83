#include "intentkg/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "intentkg/errors.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

using nlohmann::json;

namespace {

// Monday 2023-11-13 00:00 UTC; sessions start uniformly inside whole weeks
// from here, so hour and weekday are uniform.
constexpr int64_t kEpochStart = 1699833600;
constexpr int kSpanDays = 56;

struct PoolEntry {
  const char* function;
  const char* product;
};

// (function, product) pool; the first entries pin the worked examples
// (taxi -> tickets -> snacks chain, coffee, the phone rental hierarchy).
const PoolEntry kIntentPool[] = {
    {"take", "internet taxi"}, {"buy", "movie tickets"},   {"buy", "snacks"},
    {"order", "coffee"},       {"buy", "coffee beans"},    {"rent", "iphone13"},
    {"rent", "mobile phone"},  {"buy", "iphone13"},        {"buy", "mobile phone"},
    {"buy", "house"},          {"renovate", "house"},      {"pay", "electricity bill"},
    {"pay", "water bill"},     {"book", "hotel"},          {"book", "flight"},
    {"take", "bus"},           {"take", "subway"},         {"order", "milk tea"},
    {"order", "takeout"},      {"buy", "groceries"},       {"buy", "fruit"},
    {"send", "flowers"},       {"buy", "flowers"},         {"recharge", "phone credit"},
    {"recharge", "transit card"}, {"order", "pizza"},      {"order", "noodles"},
    {"buy", "train tickets"},  {"buy", "concert tickets"}, {"watch", "movie"},
    {"book", "restaurant"},    {"rent", "car"},            {"rent", "bike"},
    {"buy", "insurance"},      {"pay", "gas bill"},        {"pay", "phone bill"},
    {"buy", "books"},          {"buy", "shoes"},           {"buy", "clothes"},
    {"buy", "medicine"},       {"order", "dessert"},       {"order", "salad"},
    {"order", "burger"},       {"book", "train tickets"},  {"book", "museum tickets"},
    {"rent", "scooter"},       {"rent", "camera"},         {"rent", "umbrella"},
    {"send", "parcel"},        {"send", "red packet"},     {"buy", "stamps"},
    {"watch", "concert"},      {"watch", "show"},          {"renovate", "kitchen"},
    {"renovate", "bathroom"},  {"recharge", "game credit"}, {"buy", "milk tea"},
    {"take", "flight"},        {"buy", "pizza"},           {"order", "groceries"},
};
constexpr int kPoolSize = static_cast<int>(sizeof(kIntentPool) / sizeof(kIntentPool[0]));

const char* kBrands[] = {"cityapp",  "quickgo", "sunmart", "metroplus", "homebase",
                         "dailyhub", "fastlane", "goodday", "unilife",  "primeshop"};
const char* kNoise[] = {"official", "online", "express", "best", "daily",
                        "super",    "near",   "new",     "plus", "easy"};

const std::pair<const char*, const char*> kProductHierarchy[] = {
    {"movie tickets", "tickets"},  {"concert tickets", "tickets"},
    {"train tickets", "tickets"},  {"museum tickets", "tickets"},
    {"movie ticket", "tickets"},   {"coffee", "drink"},
    {"milk tea", "drink"},         {"iphone13", "mobile phone"},
};

ItemKind kind_for(int i) {
  static const ItemKind kinds[] = {ItemKind::Query, ItemKind::Service, ItemKind::Bill,
                                   ItemKind::Coupon, ItemKind::Store, ItemKind::Review};
  return kinds[i % 6];
}

}  // namespace

int SyntheticWorld::intent_slot(const std::string& label) const {
  for (size_t i = 0; i < intent_labels.size(); ++i) {
    if (intent_labels[i] == label) return static_cast<int>(i);
  }
  return -1;
}

std::vector<double> SyntheticWorld::base_dist(int hour, int wday, int loc) const {
  const int v = static_cast<int>(intent_labels.size());
  std::vector<double> p(v);
  double sum = 0.0;
  for (int i = 0; i < v; ++i) {
    p[i] = base_pop[i] * hour_mod.at(i, hour) * wday_mod.at(i, wday) * loc_aff.at(i, loc);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

std::vector<double> SyntheticWorld::next_dist(int prev, int hour, int wday, int loc) const {
  std::vector<double> p = base_dist(hour, wday, loc);
  double planted_mass = 0.0;
  for (const PlantedEdge& e : planted) {
    if (e.src == prev) planted_mass += e.prob;
  }
  if (planted_mass == 0.0) return p;
  for (double& x : p) x *= (1.0 - planted_mass);
  for (const PlantedEdge& e : planted) {
    if (e.src == prev) p[e.dst] += e.prob;
  }
  return p;
}

void SyntheticWorld::audit() const {
  const int v = static_cast<int>(intent_labels.size());
  if (v < 5) throw ConfigError("world: need >= 5 intents");
  if (planted.empty() && !config.allow_independent) {
    throw ConfigError("world: zero planted edges requires allow_independent");
  }
  if (config.session_len_min < 2 || config.session_len_max < config.session_len_min) {
    throw ConfigError("world: bad session length range");
  }
  double sum = 0.0;
  for (double x : base_pop) {
    if (x <= 0.0) throw ConfigError("world: base popularity must be positive");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("world: base popularity not normalized");
  for (const Mat* m : {&hour_mod, &wday_mod, &loc_aff}) {
    for (double x : m->data()) {
      if (x <= 0.0) throw ConfigError("world: modulation factors must be positive");
    }
  }
  std::vector<double> out_mass(v, 0.0);
  for (const PlantedEdge& e : planted) {
    if (e.src == e.dst) throw ConfigError("world: planted self-loop");
    if (e.prob <= 0.0 || e.prob >= 1.0) throw ConfigError("world: planted prob out of (0,1)");
    out_mass[e.src] += e.prob;
  }
  for (double m : out_mass) {
    if (m > 0.95) throw ConfigError("world: planted mass exceeds 0.95 for a source intent");
  }
  // lift audit: planted conditional must exceed the configured lift times the
  // expected session-level base rate of the destination.
  const double mean_len = 0.5 * (config.session_len_min + config.session_len_max);
  for (const PlantedEdge& e : planted) {
    double rate = 0.0;
    int ctxs = 0;
    for (int h = 0; h < 24; ++h) {
      for (int w = 0; w < 7; ++w) {
        for (int l = 0; l < config.n_locations; ++l) {
          std::vector<double> p = base_dist(h, w, l);
          rate += 1.0 - std::pow(1.0 - p[e.dst], mean_len);
          ++ctxs;
        }
      }
    }
    rate /= ctxs;
    if (e.prob < config.lift * rate) {
      throw ConfigError("world: over-constrained, planted edge " + intent_labels[e.src] +
                        " -> " + intent_labels[e.dst] + " cannot reach lift " +
                        std::to_string(config.lift));
    }
  }
}

SyntheticWorld generate_world(const WorldConfig& config) {
  if (config.n_intents < 5) throw ConfigError("generate_world: need >= 5 intents");
  if (config.n_intents > kPoolSize) {
    throw ConfigError("generate_world: intent pool has only " + std::to_string(kPoolSize) +
                      " entries");
  }
  if (config.n_planted < 1 && !config.allow_independent) {
    throw ConfigError("generate_world: need >= 1 planted edge (or allow_independent)");
  }

  SyntheticWorld w;
  w.config = config;
  const int v = config.n_intents;
  for (int i = 0; i < v; ++i) {
    w.functions.push_back(kIntentPool[i].function);
    w.products.push_back(kIntentPool[i].product);
    w.intent_labels.push_back(std::string(kIntentPool[i].function) + " " +
                              kIntentPool[i].product);
  }
  for (int l = 0; l < config.n_locations; ++l) w.locations.push_back("loc" + std::to_string(l));

  // planted edges: the taxi->tickets->snacks chain first, then sibling
  // pairs (two sources sharing a Function feeding one destination). Shared
  // functions tie the sources together in both text and graph space, so the
  // transition structure is visible to the KG embeddings. Isolated 2-node
  // components are avoided on purpose: under symmetric normalization their
  // GCN rows would collapse to identical vectors.
  if (config.n_planted >= 1) {
    std::set<int> used;
    int remaining = config.n_planted;
    w.planted.push_back({0, 1, config.chain_prob});
    used.insert(0);
    used.insert(1);
    --remaining;
    if (remaining > 0) {
      w.planted.push_back({1, 2, config.chain_prob});
      used.insert(2);
      --remaining;
    }
    for (int s = 3; s < v && remaining > 0; ++s) {
      if (used.count(s)) continue;
      int sibling = -1;
      for (int t = s + 1; t < v; ++t) {
        if (!used.count(t) && w.functions[t] == w.functions[s]) {
          sibling = t;
          break;
        }
      }
      int dst = -1;
      for (int t = 3; t < v; ++t) {
        if (!used.count(t) && t != s && t != sibling) {
          dst = t;
          break;
        }
      }
      if (dst < 0) break;
      w.planted.push_back({s, dst, config.chain_prob});
      used.insert(s);
      used.insert(dst);
      --remaining;
      if (sibling >= 0 && remaining > 0) {
        w.planted.push_back({sibling, dst, config.chain_prob});
        used.insert(sibling);
        --remaining;
      }
    }
    if (remaining > 0) {
      throw ConfigError("generate_world: too many planted edges for the vocabulary");
    }
  }

  // planted destinations get low base popularity so the lift target holds
  std::vector<bool> is_dst(v, false);
  for (const PlantedEdge& e : w.planted) is_dst[e.dst] = true;
  w.base_pop.resize(v);
  double sum = 0.0;
  for (int i = 0; i < v; ++i) {
    w.base_pop[i] = is_dst[i] ? 0.3 : 1.0 + 0.05 * (i % 5);
    sum += w.base_pop[i];
  }
  for (double& x : w.base_pop) x /= sum;

  w.hour_mod = Mat(v, 24);
  w.wday_mod = Mat(v, 7);
  w.loc_aff = Mat(v, config.n_locations);
  w.hour_mod.fill(1.0);
  w.wday_mod.fill(1.0);
  w.loc_aff.fill(1.0);
  for (int i = 0; i < v; ++i) {
    if (i % 5 == 3) {  // afternoon intents
      for (int h = 14; h <= 17; ++h) w.hour_mod.at(i, h) = config.mod_strength;
    }
    if (i % 5 == 2) {  // weekend intents
      w.wday_mod.at(i, 5) = config.mod_strength;
      w.wday_mod.at(i, 6) = config.mod_strength;
      w.weekend_intents.push_back(i);
    }
    w.loc_aff.at(i, i % config.n_locations) = config.mod_strength;
  }

  // catalog
  Rng rng(config.seed);
  int item_no = 0;
  for (int i = 0; i < v; ++i) {
    for (int k = 0; k < config.items_per_intent; ++k) {
      CatalogItem item;
      item.id = "item:" + std::to_string(item_no);
      item.kind = kind_for(item_no);
      item.intents.push_back(i);
      std::string text = std::string(kBrands[rng.next_below(10)]) + " " + w.intent_labels[i];
      if (item_no % 5 == 4 && v > 1) {  // occasional multi-intent item
        int other = (i + 7) % v;
        if (other != i) {
          item.intents.push_back(other);
          text += " " + w.intent_labels[other];
        }
      }
      text += " " + std::string(kNoise[rng.next_below(10)]);
      if (rng.next_below(2)) text += " " + std::string(kNoise[rng.next_below(10)]);
      item.text = text;
      w.catalog.push_back(std::move(item));
      ++item_no;
    }
  }
  if (v > 4) {
    CatalogItem sb;
    sb.id = "item:starbucks";
    sb.kind = ItemKind::Service;
    sb.text = "starbucks applet order coffee and buy coffee beans";
    sb.intents = {3, 4};
    w.catalog.push_back(std::move(sb));
  }

  for (const auto& [child, parent] : kProductHierarchy) {
    // only emit pairs whose child product is actually in this world
    for (int i = 0; i < v; ++i) {
      if (w.products[i] == child) {
        w.product_isa.emplace_back(child, parent);
        break;
      }
    }
  }

  w.audit();
  return w;
}

std::vector<UserEvent> generate_logs(const SyntheticWorld& world, int n_users,
                                     int events_per_user, uint64_t seed) {
  if (n_users < 0 || events_per_user < 0) {
    throw std::invalid_argument("generate_logs: sizes must be non-negative");
  }
  // intent slot -> catalog item indices
  std::vector<std::vector<int>> items_of(world.intent_labels.size());
  for (size_t i = 0; i < world.catalog.size(); ++i) {
    for (int slot : world.catalog[i].intents) items_of[slot].push_back(static_cast<int>(i));
  }

  Rng rng(seed ^ world.config.seed);
  std::vector<UserEvent> events;
  char user_buf[16];
  for (int u = 0; u < n_users; ++u) {
    std::snprintf(user_buf, sizeof(user_buf), "u%04d", u);
    std::set<int> used_days;
    int emitted = 0;
    while (emitted < events_per_user) {
      int day = static_cast<int>(rng.next_below(kSpanDays));
      if (used_days.count(day)) continue;  // one session per day keeps sessions apart
      if (static_cast<int>(used_days.size()) >= kSpanDays) break;
      used_days.insert(day);

      int64_t start = kEpochStart + int64_t(day) * 86400 +
                      static_cast<int64_t>(rng.next_below(86400 - 3600));
      GlobalTime ctx = global_time_utc(start);
      int loc = static_cast<int>(rng.next_below(world.locations.size()));
      int len = static_cast<int>(
          rng.next_range(world.config.session_len_min, world.config.session_len_max));

      int64_t ts = start;
      int prev = -1;
      for (int t = 0; t < len; ++t) {
        std::vector<double> dist = (prev < 0)
                                       ? world.base_dist(ctx.hour, ctx.weekday, loc)
                                       : world.next_dist(prev, ctx.hour, ctx.weekday, loc);
        int slot = static_cast<int>(rng.next_weighted(dist));
        UserEvent e;
        e.user = user_buf;
        e.ts = ts;
        e.location = world.locations[loc];
        e.intent = world.intent_labels[slot];
        const auto& its = items_of[slot];
        if (!its.empty()) {
          e.item = world.catalog[its[rng.next_below(its.size())]].id;
        }
        events.push_back(std::move(e));
        prev = slot;
        ts += rng.next_range(30, 120);
        ++emitted;
      }
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const UserEvent& a, const UserEvent& b) {
    if (a.user != b.user) return a.user < b.user;
    return a.ts < b.ts;
  });
  return events;
}

double expected_next_prob(const SyntheticWorld& world, int src, int dst) {
  double total = 0.0;
  int ctxs = 0;
  for (int h = 0; h < 24; ++h) {
    for (int w = 0; w < 7; ++w) {
      for (int l = 0; l < world.config.n_locations; ++l) {
        total += world.next_dist(src, h, w, l)[dst];
        ++ctxs;
      }
    }
  }
  return total / ctxs;
}

double analytic_bayes_recall1(const SyntheticWorld& world) {
  const int v = static_cast<int>(world.intent_labels.size());
  const int lmin = world.config.session_len_min;
  const int lmax = world.config.session_len_max;
  double total = 0.0;
  int ctxs = 0;
  for (int h = 0; h < 24; ++h) {
    for (int w = 0; w < 7; ++w) {
      for (int l = 0; l < world.config.n_locations; ++l) {
        std::vector<double> p0 = world.base_dist(h, w, l);
        std::vector<std::vector<double>> m(v);
        std::vector<double> best(v, 0.0);
        for (int a = 0; a < v; ++a) {
          m[a] = world.next_dist(a, h, w, l);
          best[a] = *std::max_element(m[a].begin(), m[a].end());
        }
        // mu_t = distribution of the intent at position t; the held-out
        // event sits at position n-1, so its predecessor is at n-2.
        std::vector<double> mu = p0;
        double ctx_rate = 0.0;
        for (int t = 0; t <= lmax - 2; ++t) {
          if (t >= lmin - 2) {
            double rate = 0.0;
            for (int a = 0; a < v; ++a) rate += mu[a] * best[a];
            ctx_rate += rate / (lmax - lmin + 1);
          }
          if (t < lmax - 2) {
            std::vector<double> next(v, 0.0);
            for (int a = 0; a < v; ++a) {
              for (int b = 0; b < v; ++b) next[b] += mu[a] * m[a][b];
            }
            mu = std::move(next);
          }
        }
        total += ctx_rate;
        ++ctxs;
      }
    }
  }
  return total / ctxs;
}

namespace {

}  // namespace

TrainEvalSplit split_temporal(const std::vector<UserEvent>& logs, int64_t session_gap) {
  std::map<std::string, std::vector<Session>> per_user;
  for (Session& s : segment_sessions(logs, session_gap, 1 << 20)) {
    per_user[s.user].push_back(std::move(s));
  }
  TrainEvalSplit split;
  for (auto& [user, sessions] : per_user) {
    int held = -1;
    for (int i = static_cast<int>(sessions.size()) - 1; i >= 0; --i) {
      if (sessions[i].events.size() >= 2) {
        held = i;
        break;
      }
    }
    for (int i = 0; i < static_cast<int>(sessions.size()); ++i) {
      if (i == held) {
        HeldOutCase h;
        h.target = sessions[i].events.back();
        h.context.assign(sessions[i].events.begin(), sessions[i].events.end() - 1);
        split.held_out.push_back(std::move(h));
      } else {
        split.train_sessions.push_back(std::move(sessions[i]));
      }
    }
  }
  return split;
}

AblationRow evaluate_one(const PredictorModel& model, const std::vector<UserEvent>& logs,
                         const ConceptGraph& graph, const EvalConfig& config, double beta,
                         const std::string& name) {
  std::vector<HeldOutCase> held = split_temporal(logs, config.session_gap).held_out;
  AblationRow row;
  row.name = name;
  int hits1 = 0, hits10 = 0, matched = 0;
  for (const HeldOutCase& h : held) {
    std::vector<UserEvent> ctx = map_unknown_intents(model, h.context);
    std::vector<QuerySlot> future{{h.target.ts, h.target.location}};
    PredictionResult r = predict_top_k(model, ctx, 10, graph, beta, future);
    if (!r.top_k.empty() && r.top_k[0].first == h.target.intent) ++hits1;
    for (size_t i = 0; i < r.top_k.size() && i < 10; ++i) {
      if (r.top_k[i].first == h.target.intent) {
        ++hits10;
        break;
      }
    }
    if (!r.explanations.empty()) ++matched;
  }
  row.eval_events = static_cast<int>(held.size());
  if (!held.empty()) {
    row.recall1 = static_cast<double>(hits1) / held.size();
    row.recall10 = static_cast<double>(hits10) / held.size();
    row.rule_match_rate = static_cast<double>(matched) / held.size();
  }
  return row;
}

std::vector<AblationRow> evaluate_next_intent(const PredictorModel& plain,
                                              const PredictorModel& fused,
                                              const std::vector<UserEvent>& logs,
                                              const ConceptGraph& graph,
                                              const EvalConfig& config) {
  std::vector<AblationRow> grid;
  grid.push_back(evaluate_one(plain, logs, graph, config, 0.0, "plain"));
  grid.push_back(evaluate_one(plain, logs, graph, config, config.beta, "plain+rules"));
  grid.push_back(evaluate_one(fused, logs, graph, config, 0.0, "fused"));
  grid.push_back(evaluate_one(fused, logs, graph, config, config.beta, "fused+rules"));
  return grid;
}

namespace {

struct CatalogIndex {
  std::map<std::string, const CatalogItem*> by_id;
  std::map<std::string, std::vector<double>> item_vecs;  // encoded
  std::map<std::string, std::vector<std::string>> labeled_intents;
  std::map<std::string, std::map<std::string, double>> match_cache;
};

double match_score(CatalogIndex& idx, const RecsysComponents& c, const std::string& item_id,
                   const std::string& intent_label) {
  auto& cache = idx.match_cache[item_id];
  auto hit = cache.find(intent_label);
  if (hit != cache.end()) return hit->second;
  double s = 0.0;
  NodeId node = c.graph->find_by_label(NodeKind::Intent, intent_label);
  const double* row = node == kNoNode ? nullptr : c.table->row_for(node);
  if (row) {
    std::vector<double> intent_vec(row, row + c.table->dim());
    s = score_item_intent(idx.item_vecs.at(item_id), intent_vec, *c.matcher);
  }
  cache[intent_label] = s;
  return s;
}

std::vector<std::string> rank_candidates(
    CatalogIndex& idx, const RecsysComponents& c, const std::vector<std::string>& pool,
    const std::vector<std::pair<std::string, double>>& top_intents,
    const std::map<std::string, double>& popularity, const EvalConfig& config, bool use_match) {
  std::vector<std::pair<double, std::string>> scored;
  scored.reserve(pool.size());
  for (const std::string& id : pool) {
    double s = 0.0;
    if (use_match) {
      double m = 0.0;
      for (const auto& [intent, p] : top_intents) m += p * match_score(idx, c, id, intent);
      s += config.w1 * m;
    }
    auto pit = popularity.find(id);
    s += config.w2 * (pit == popularity.end() ? 0.0 : pit->second);
    scored.emplace_back(s, id);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (auto& [_, id] : scored) out.push_back(id);
  return out;
}

}  // namespace

std::vector<std::string> rank_items(const SyntheticWorld& world, const RecsysComponents& c,
                                    const std::vector<std::string>& pool,
                                    const std::vector<std::pair<std::string, double>>& top_intents,
                                    const std::map<std::string, double>& popularity,
                                    const EvalConfig& config) {
  CatalogIndex idx;
  for (const CatalogItem& item : world.catalog) {
    idx.by_id[item.id] = &item;
    Item it{item.id, item.kind, item.text, {}};
    idx.item_vecs[item.id] = encode_item(it, *c.encoder, c.matcher->config.image_dim);
  }
  return rank_candidates(idx, c, pool, top_intents, popularity, config, true);
}

EvalReport run_recsys(const SyntheticWorld& world, const std::vector<UserEvent>& logs,
                      const RecsysComponents& c, const EvalConfig& config, RecsysMode mode,
                      uint64_t seed) {
  if (mode != RecsysMode::PopularityOnly &&
      (!c.matcher || !c.table || !c.graph || !c.encoder)) {
    throw std::invalid_argument("run_recsys: untrained components");
  }
  if (mode == RecsysMode::Full && !c.predictor) {
    throw std::invalid_argument("run_recsys: predictor required in full mode");
  }

  CatalogIndex idx;
  double micro_tp = 0.0, micro_fp = 0.0, micro_fn = 0.0;
  std::map<std::string, std::vector<std::string>> items_of_intent;
  if (mode != RecsysMode::PopularityOnly) {
    for (const CatalogItem& item : world.catalog) {
      idx.by_id[item.id] = &item;
      Item it{item.id, item.kind, item.text, {}};
      idx.item_vecs[item.id] = encode_item(it, *c.encoder, c.matcher->config.image_dim);
      std::vector<IntentScore> labels =
          label_item(it, *c.table, *c.matcher, *c.encoder,
                     static_cast<int>(c.table->intent_order.size()), config.label_threshold);
      std::set<std::string> predicted;
      for (const IntentScore& ls : labels) {
        predicted.insert(c.graph->node(ls.intent).label);
      }
      std::set<std::string> truth;
      for (int slot : item.intents) truth.insert(world.intent_labels[slot]);
      for (const std::string& p : predicted) {
        if (truth.count(p)) {
          micro_tp += 1.0;
        } else {
          micro_fp += 1.0;
        }
        idx.labeled_intents[item.id].push_back(p);
        items_of_intent[p].push_back(item.id);
      }
      for (const std::string& t : truth) {
        if (!predicted.count(t)) micro_fn += 1.0;
      }
    }
  }

  TrainEvalSplit split = split_temporal(logs, config.session_gap);
  const std::vector<HeldOutCase>& held = split.held_out;

  // popularity over training events only, normalized by max count
  std::map<std::string, double> pop_count;
  for (const Session& s : split.train_sessions) {
    for (const UserEvent& e : s.events) {
      if (!e.item.empty()) pop_count[e.item] += 1.0;
    }
  }
  double max_count = 1.0;
  for (auto& [_, n] : pop_count) max_count = std::max(max_count, n);
  std::map<std::string, double> popularity;
  for (auto& [id, n] : pop_count) popularity[id] = n / max_count;
  std::vector<std::string> popular_items;
  {
    std::vector<std::pair<double, std::string>> ranked;
    for (auto& [id, p] : popularity) ranked.emplace_back(p, id);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (auto& [_, id] : ranked) popular_items.push_back(id);
  }

  Rng rng(seed);
  int hits = 0, hits1 = 0, hits10 = 0, matched = 0, with_item = 0;
  for (const HeldOutCase& h : held) {
    // predicted top-K intents with probabilities
    std::vector<std::pair<std::string, double>> top;
    std::vector<RuleExplanation> explanations;
    if (mode == RecsysMode::Full) {
      std::vector<UserEvent> ctx = map_unknown_intents(*c.predictor, h.context);
      std::vector<QuerySlot> future{{h.target.ts, h.target.location}};
      PredictionResult r = predict_top_k(*c.predictor, ctx, config.top_k_intents, *c.graph,
                                         config.beta, future);
      top = r.top_k;
      explanations = r.explanations;
    } else if (mode == RecsysMode::OraclePredictor) {
      top.emplace_back(h.target.intent, 1.0);
    } else if (mode == RecsysMode::RandomPredictor) {
      for (int k = 0; k < config.top_k_intents; ++k) {
        int slot = static_cast<int>(rng.next_below(world.intent_labels.size()));
        top.emplace_back(world.intent_labels[slot], 1.0 / config.top_k_intents);
      }
    }
    if (!top.empty() && top[0].first == h.target.intent) ++hits1;
    for (size_t i = 0; i < top.size() && i < 10; ++i) {
      if (top[i].first == h.target.intent) {
        ++hits10;
        break;
      }
    }
    if (!explanations.empty()) ++matched;

    if (h.target.item.empty()) continue;
    ++with_item;

    // recall pool: intent-based items first (by predicted intent rank), then
    // popularity fill
    std::vector<std::string> pool;
    std::set<std::string> seen;
    if (mode != RecsysMode::PopularityOnly) {
      for (const auto& [intent, _] : top) {
        auto iit = items_of_intent.find(intent);
        if (iit == items_of_intent.end()) continue;
        for (const std::string& id : iit->second) {
          if (static_cast<int>(pool.size()) >= config.recall_pool) break;
          if (seen.insert(id).second) pool.push_back(id);
        }
      }
    }
    for (const std::string& id : popular_items) {
      if (static_cast<int>(pool.size()) >= config.recall_pool) break;
      if (seen.insert(id).second) pool.push_back(id);
    }

    std::vector<std::string> ranked =
        mode == RecsysMode::PopularityOnly
            ? pool
            : rank_candidates(idx, c, pool, top, popularity, config, true);
    for (int i = 0; i < config.hit_n && i < static_cast<int>(ranked.size()); ++i) {
      if (ranked[i] == h.target.item) {
        ++hits;
        break;
      }
    }
  }

  EvalReport report;
  report.eval_events = static_cast<int>(held.size());
  if (!held.empty()) {
    report.recall1 = static_cast<double>(hits1) / held.size();
    report.recall10 = static_cast<double>(hits10) / held.size();
    report.rule_match_rate = static_cast<double>(matched) / held.size();
  }
  if (with_item > 0) report.hit_rate = static_cast<double>(hits) / with_item;
  double denom_p = micro_tp + micro_fp;
  double denom_r = micro_tp + micro_fn;
  if (denom_p > 0.0 && denom_r > 0.0 && micro_tp > 0.0) {
    double prec = micro_tp / denom_p;
    double rec = micro_tp / denom_r;
    report.micro_f1 = 2.0 * prec * rec / (prec + rec);
  }
  switch (mode) {
    case RecsysMode::Full: report.mode = "full"; break;
    case RecsysMode::PopularityOnly: report.mode = "popularity"; break;
    case RecsysMode::OraclePredictor: report.mode = "oracle"; break;
    case RecsysMode::RandomPredictor: report.mode = "random"; break;
  }
  report.seed = seed;
  json echo;
  echo["recall_pool"] = config.recall_pool;
  echo["top_k_intents"] = config.top_k_intents;
  echo["w1"] = config.w1;
  echo["w2"] = config.w2;
  echo["hit_n"] = config.hit_n;
  echo["beta"] = config.beta;
  echo["label_threshold"] = config.label_threshold;
  report.config_echo = echo.dump();
  return report;
}

std::vector<UserEvent> feedback_resample(const std::vector<UserEvent>& logs,
                                         const std::set<std::string>& recommended_items,
                                         double exposure_bias, uint64_t seed) {
  Rng rng(seed);
  std::vector<UserEvent> out;
  out.reserve(logs.size());
  for (const UserEvent& e : logs) {
    out.push_back(e);
    if (!e.item.empty() && recommended_items.count(e.item) &&
        rng.next_double() < exposure_bias) {
      out.push_back(e);  // exposure doubles the weight of recommended items
    }
  }
  return out;
}

std::string EvalReport::to_json() const {
  json j;
  j["mode"] = mode;
  j["recall@1"] = recall1;
  j["recall@10"] = recall10;
  j["micro_f1"] = micro_f1;
  j["hit_rate"] = hit_rate;
  j["rule_match_rate"] = rule_match_rate;
  j["eval_events"] = eval_events;
  j["seed"] = seed;
  j["config"] = json::parse(config_echo.empty() ? "{}" : config_echo);
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "mode          " << mode << "\n";
  os << "recall@1      " << recall1 << "\n";
  os << "recall@10     " << recall10 << "\n";
  os << "micro-F1      " << micro_f1 << "\n";
  os << "hit-rate      " << hit_rate << "\n";
  os << "rule-match    " << rule_match_rate << "\n";
  os << "eval events   " << eval_events << "\n";
  return os.str();
}

std::string serialize_world(const SyntheticWorld& w) {
  std::ostringstream os;
  json cfg;
  cfg["t"] = "world";
  cfg["n_intents"] = w.config.n_intents;
  cfg["n_locations"] = w.config.n_locations;
  cfg["n_planted"] = w.config.n_planted;
  cfg["lift"] = w.config.lift;
  cfg["chain_prob"] = w.config.chain_prob;
  cfg["session_len_min"] = w.config.session_len_min;
  cfg["session_len_max"] = w.config.session_len_max;
  cfg["items_per_intent"] = w.config.items_per_intent;
  cfg["mod_strength"] = w.config.mod_strength;
  cfg["allow_independent"] = w.config.allow_independent;
  cfg["seed"] = w.config.seed;
  cfg["locations"] = w.locations;
  cfg["weekend_intents"] = w.weekend_intents;
  os << cfg.dump() << "\n";
  for (size_t i = 0; i < w.intent_labels.size(); ++i) {
    json j;
    j["t"] = "intent";
    j["slot"] = i;
    j["label"] = w.intent_labels[i];
    j["function"] = w.functions[i];
    j["product"] = w.products[i];
    j["base_pop"] = w.base_pop[i];
    j["hour_mod"] = std::vector<double>(w.hour_mod.row(static_cast<int>(i)),
                                        w.hour_mod.row(static_cast<int>(i)) + 24);
    j["wday_mod"] = std::vector<double>(w.wday_mod.row(static_cast<int>(i)),
                                        w.wday_mod.row(static_cast<int>(i)) + 7);
    j["loc_aff"] = std::vector<double>(w.loc_aff.row(static_cast<int>(i)),
                                       w.loc_aff.row(static_cast<int>(i)) + w.locations.size());
    os << j.dump() << "\n";
  }
  for (const PlantedEdge& e : w.planted) {
    json j;
    j["t"] = "planted";
    j["src"] = e.src;
    j["dst"] = e.dst;
    j["prob"] = e.prob;
    os << j.dump() << "\n";
  }
  for (const CatalogItem& item : w.catalog) {
    json j;
    j["t"] = "item";
    j["id"] = item.id;
    j["kind"] = std::string(to_string(item.kind));
    j["text"] = item.text;
    j["intents"] = item.intents;
    os << j.dump() << "\n";
  }
  for (const auto& [child, parent] : w.product_isa) {
    json j;
    j["t"] = "product_isa";
    j["child"] = child;
    j["parent"] = parent;
    os << j.dump() << "\n";
  }
  return os.str();
}

SyntheticWorld parse_world(const std::string& content) {
  SyntheticWorld w;
  std::istringstream is(content);
  std::string line;
  size_t line_no = 0;
  std::vector<json> intents;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad world record: ") + e.what(), line_no);
    }
    std::string t = j.value("t", "");
    if (t == "world") {
      w.config.n_intents = j.at("n_intents").get<int>();
      w.config.n_locations = j.at("n_locations").get<int>();
      w.config.n_planted = j.at("n_planted").get<int>();
      w.config.lift = j.at("lift").get<double>();
      w.config.chain_prob = j.at("chain_prob").get<double>();
      w.config.session_len_min = j.at("session_len_min").get<int>();
      w.config.session_len_max = j.at("session_len_max").get<int>();
      w.config.items_per_intent = j.at("items_per_intent").get<int>();
      w.config.mod_strength = j.at("mod_strength").get<double>();
      w.config.allow_independent = j.value("allow_independent", false);
      w.config.seed = j.at("seed").get<uint64_t>();
      w.locations = j.at("locations").get<std::vector<std::string>>();
      w.weekend_intents = j.value("weekend_intents", std::vector<int>{});
    } else if (t == "intent") {
      intents.push_back(j);
    } else if (t == "planted") {
      w.planted.push_back({j.at("src").get<int>(), j.at("dst").get<int>(),
                           j.at("prob").get<double>()});
    } else if (t == "item") {
      CatalogItem item;
      item.id = j.at("id").get<std::string>();
      item.kind = item_kind_from_string(j.at("kind").get<std::string>());
      item.text = j.at("text").get<std::string>();
      item.intents = j.at("intents").get<std::vector<int>>();
      w.catalog.push_back(std::move(item));
    } else if (t == "product_isa") {
      w.product_isa.emplace_back(j.at("child").get<std::string>(),
                                 j.at("parent").get<std::string>());
    } else {
      throw ParseError("unknown world record '" + t + "'", line_no);
    }
  }
  const int v = static_cast<int>(intents.size());
  w.intent_labels.resize(v);
  w.functions.resize(v);
  w.products.resize(v);
  w.base_pop.resize(v);
  w.hour_mod = Mat(v, 24);
  w.wday_mod = Mat(v, 7);
  w.loc_aff = Mat(v, static_cast<int>(w.locations.size()));
  for (const json& j : intents) {
    int slot = j.at("slot").get<int>();
    w.intent_labels[slot] = j.at("label").get<std::string>();
    w.functions[slot] = j.at("function").get<std::string>();
    w.products[slot] = j.at("product").get<std::string>();
    w.base_pop[slot] = j.at("base_pop").get<double>();
    auto hm = j.at("hour_mod").get<std::vector<double>>();
    auto wm = j.at("wday_mod").get<std::vector<double>>();
    auto la = j.at("loc_aff").get<std::vector<double>>();
    for (int k = 0; k < 24; ++k) w.hour_mod.at(slot, k) = hm[k];
    for (int k = 0; k < 7; ++k) w.wday_mod.at(slot, k) = wm[k];
    for (size_t k = 0; k < w.locations.size(); ++k) {
      w.loc_aff.at(slot, static_cast<int>(k)) = la[k];
    }
  }
  return w;
}

void save_world(const SyntheticWorld& world, const std::string& path) {
  write_text_file(path, serialize_world(world));
}

SyntheticWorld load_world(const std::string& path) {
  return parse_world(read_text_file(path));
}

std::string serialize_catalog(const SyntheticWorld& world) {
  std::ostringstream os;
  for (const CatalogItem& item : world.catalog) {
    json j;
    j["id"] = item.id;
    j["kind"] = std::string(to_string(item.kind));
    j["text"] = item.text;
    os << j.dump() << "\n";
  }
  return os.str();
}

std::vector<Item> parse_catalog(const std::string& content) {
  std::vector<Item> items;
  std::istringstream is(content);
  std::string line;
  size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad catalog record: ") + e.what(), line_no);
    }
    Item item;
    item.id = j.at("id").get<std::string>();
    item.kind = item_kind_from_string(j.at("kind").get<std::string>());
    item.text = j.at("text").get<std::string>();
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace intentkg
