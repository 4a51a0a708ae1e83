#include "intentkg/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "intentkg/util.hpp"

namespace intentkg {

namespace {

inline bool bit(const std::vector<uint64_t>& row, int v) {
  return (row[v >> 6] >> (v & 63)) & 1ULL;
}

inline void set_bit(std::vector<uint64_t>& row, int v) {
  row[v >> 6] |= 1ULL << (v & 63);
}

class StructureSearch {
 public:
  StructureSearch(const std::vector<std::vector<uint64_t>>& rows, int n_vars, int max_parents)
      : rows_(rows), n_(n_vars), max_parents_(max_parents), log_n_(std::log(double(rows.size()))) {}

  double family_score(int v, const std::vector<int>& parents) {
    auto key = std::make_pair(v, parents);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    const int k = static_cast<int>(parents.size());
    std::vector<double> n1(size_t(1) << k, 0.0), n0(size_t(1) << k, 0.0);
    for (const auto& row : rows_) {
      size_t cfg = 0;
      for (int p = 0; p < k; ++p) {
        cfg |= static_cast<size_t>(bit(row, parents[p])) << p;
      }
      (bit(row, v) ? n1 : n0)[cfg] += 1.0;
    }
    double ll = 0.0;
    for (size_t cfg = 0; cfg < n1.size(); ++cfg) {
      double total = n1[cfg] + n0[cfg];
      if (total == 0.0) continue;
      if (n1[cfg] > 0.0) ll += n1[cfg] * std::log(n1[cfg] / total);
      if (n0[cfg] > 0.0) ll += n0[cfg] * std::log(n0[cfg] / total);
    }
    double score = ll - 0.5 * log_n_ * static_cast<double>(size_t(1) << k);
    cache_.emplace(key, score);
    return score;
  }

  // true if `to` is reachable from `from` along current edges
  bool reachable(const std::vector<std::vector<int>>& parents, int from, int to) const {
    // edges are parent -> child; walk children of `from`
    std::vector<int> stack{from};
    std::vector<bool> seen(n_, false);
    seen[from] = true;
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      if (cur == to) return true;
      for (int child = 0; child < n_; ++child) {
        if (seen[child]) continue;
        const auto& ps = parents[child];
        if (std::find(ps.begin(), ps.end(), cur) != ps.end()) {
          seen[child] = true;
          stack.push_back(child);
        }
      }
    }
    return false;
  }

  double total_score(const std::vector<std::vector<int>>& parents) {
    double s = 0.0;
    for (int v = 0; v < n_; ++v) s += family_score(v, parents[v]);
    return s;
  }

  // Greedy hill climbing from the given start structure.
  BayesNet climb(std::vector<std::vector<int>> parents) {
    for (auto& ps : parents) std::sort(ps.begin(), ps.end());
    double score = total_score(parents);
    while (true) {
      double best_delta = 1e-9;
      int best_kind = -1, best_a = -1, best_b = -1;  // kind: 0 add, 1 del, 2 rev
      for (int a = 0; a < n_; ++a) {
        for (int b = 0; b < n_; ++b) {
          if (a == b) continue;
          const auto& pb = parents[b];
          bool has_ab = std::find(pb.begin(), pb.end(), a) != pb.end();
          if (!has_ab) {
            if (static_cast<int>(pb.size()) >= max_parents_) continue;
            if (reachable(parents, b, a)) continue;  // would close a cycle
            std::vector<int> np = pb;
            np.insert(std::lower_bound(np.begin(), np.end(), a), a);
            double delta = family_score(b, np) - family_score(b, pb);
            if (delta > best_delta) {
              best_delta = delta;
              best_kind = 0;
              best_a = a;
              best_b = b;
            }
          } else {
            // delete a->b
            std::vector<int> np;
            for (int p : pb) {
              if (p != a) np.push_back(p);
            }
            double base = family_score(b, pb);
            double delta = family_score(b, np) - base;
            if (delta > best_delta) {
              best_delta = delta;
              best_kind = 1;
              best_a = a;
              best_b = b;
            }
            // reverse to b->a
            if (static_cast<int>(parents[a].size()) < max_parents_) {
              auto removed = parents;
              removed[b] = np;
              if (!reachable(removed, a, b)) {
                std::vector<int> pa = parents[a];
                pa.insert(std::lower_bound(pa.begin(), pa.end(), b), b);
                double delta2 = (family_score(b, np) - base) +
                                (family_score(a, pa) - family_score(a, parents[a]));
                if (delta2 > best_delta) {
                  best_delta = delta2;
                  best_kind = 2;
                  best_a = a;
                  best_b = b;
                }
              }
            }
          }
        }
      }
      if (best_kind < 0) break;
      auto& pb = parents[best_b];
      if (best_kind == 0) {
        pb.insert(std::lower_bound(pb.begin(), pb.end(), best_a), best_a);
      } else if (best_kind == 1) {
        pb.erase(std::find(pb.begin(), pb.end(), best_a));
      } else {
        pb.erase(std::find(pb.begin(), pb.end(), best_a));
        auto& pa = parents[best_a];
        pa.insert(std::lower_bound(pa.begin(), pa.end(), best_b), best_b);
      }
      score += best_delta;
    }
    return BayesNet{parents, total_score(parents)};
  }

  int n_vars() const { return n_; }

 private:
  const std::vector<std::vector<uint64_t>>& rows_;
  int n_;
  int max_parents_;
  double log_n_;
  std::map<std::pair<int, std::vector<int>>, double> cache_;
};

}  // namespace

BayesNet learn_structure(const std::vector<std::vector<uint64_t>>& occurrence_rows, int n_vars,
                         int max_parents, int restarts, uint64_t seed) {
  if (occurrence_rows.empty()) throw std::invalid_argument("learn_structure: no data");
  StructureSearch search(occurrence_rows, n_vars, max_parents);

  BayesNet best = search.climb(std::vector<std::vector<int>>(n_vars));
  Rng rng(seed);
  for (int r = 1; r <= restarts; ++r) {
    // random acyclic start: attempt n_vars random edges
    std::vector<std::vector<int>> parents(n_vars);
    std::vector<std::vector<int>> dummy(n_vars);
    for (int t = 0; t < n_vars; ++t) {
      int a = static_cast<int>(rng.next_below(n_vars));
      int b = static_cast<int>(rng.next_below(n_vars));
      if (a == b) continue;
      auto& pb = parents[b];
      if (static_cast<int>(pb.size()) >= max_parents) continue;
      if (std::find(pb.begin(), pb.end(), a) != pb.end()) continue;
      if (search.reachable(parents, b, a)) continue;
      pb.insert(std::lower_bound(pb.begin(), pb.end(), a), a);
    }
    BayesNet net = search.climb(std::move(parents));
    if (net.bic > best.bic + 1e-12 ||
        (std::fabs(net.bic - best.bic) <= 1e-12 && net.parents < best.parents)) {
      best = std::move(net);
    }
  }
  return best;
}

std::vector<ScoredRelation> mine_consequent(const std::vector<Session>& sessions,
                                            const ConsequentConfig& config) {
  if (sessions.empty()) throw std::invalid_argument("mine_consequent: no sessions");

  std::set<std::string> vocab_set;
  for (const Session& s : sessions) {
    for (const UserEvent& e : s.events) {
      if (!e.labeled()) {
        throw std::invalid_argument("mine_consequent: event without intent label (user " +
                                    e.user + ")");
      }
      vocab_set.insert(e.intent);
    }
  }
  if (vocab_set.size() < 2) return {};

  std::vector<std::string> vocab(vocab_set.begin(), vocab_set.end());
  std::map<std::string, int> index;
  for (size_t i = 0; i < vocab.size(); ++i) index[vocab[i]] = static_cast<int>(i);
  const int n = static_cast<int>(vocab.size());
  const int words = (n + 63) / 64;
  const double total = static_cast<double>(sessions.size());

  // occurrence bitmask rows + pairwise temporal stats
  std::vector<std::vector<uint64_t>> rows;
  rows.reserve(sessions.size());
  std::vector<double> n_occ(n, 0.0);
  Mat before(n, n);   // first(a) < first(b), sessions with both
  Mat follows(n, n);  // some b occurs after first(a)
  Mat cooc(n, n);
  std::vector<int> first_pos(n), last_pos(n);
  for (const Session& s : sessions) {
    std::vector<uint64_t> row(words, 0);
    std::fill(first_pos.begin(), first_pos.end(), -1);
    std::fill(last_pos.begin(), last_pos.end(), -1);
    int pos = 0;
    for (const UserEvent& e : s.events) {
      int v = index[e.intent];
      set_bit(row, v);
      if (first_pos[v] < 0) first_pos[v] = pos;
      last_pos[v] = pos;
      ++pos;
    }
    std::vector<int> present;
    for (int v = 0; v < n; ++v) {
      if (first_pos[v] >= 0) present.push_back(v);
    }
    for (int a : present) {
      n_occ[a] += 1.0;
      for (int b : present) {
        if (a == b) continue;
        cooc.at(a, b) += 1.0;
        if (first_pos[a] < first_pos[b]) before.at(a, b) += 1.0;
        if (last_pos[b] > first_pos[a]) follows.at(a, b) += 1.0;
      }
    }
    rows.push_back(std::move(row));
  }

  BayesNet net = learn_structure(rows, n, config.max_parents, config.restarts, config.seed);

  // dependent pairs, undirected
  std::set<std::pair<int, int>> pairs;
  for (int v = 0; v < n; ++v) {
    for (int p : net.parents[v]) {
      pairs.emplace(std::min(p, v), std::max(p, v));
    }
  }

  std::vector<ScoredRelation> out;
  for (const auto& [a, b] : pairs) {
    for (const auto& [src, dst] : {std::make_pair(a, b), std::make_pair(b, a)}) {
      double co = cooc.at(src, dst);
      if (co == 0.0) continue;
      double ratio = before.at(src, dst) / co;
      if (ratio < 0.5 + config.margin) continue;
      double support = before.at(src, dst);
      if (support < static_cast<double>(config.min_support)) continue;
      double p_follow = n_occ[src] > 0.0 ? follows.at(src, dst) / n_occ[src] : 0.0;
      double p_base = n_occ[dst] / total;
      if (p_base == 0.0) continue;
      double lift = p_follow / p_base;
      if (lift < config.min_lift) continue;
      ScoredRelation r;
      r.src = vocab[src];
      r.dst = vocab[dst];
      r.kind = EdgeKind::Consequent;
      r.score = lift;
      r.evidence["lift"] = lift;
      r.evidence["cooc"] = co;
      r.evidence["n_before"] = before.at(src, dst);
      r.evidence["n_after"] = before.at(dst, src);
      r.evidence["ratio"] = ratio;
      r.evidence["support"] = support;
      out.push_back(std::move(r));
    }
  }
  std::sort(out.begin(), out.end(), [](const ScoredRelation& x, const ScoredRelation& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::tie(x.src, x.dst) < std::tie(y.src, y.dst);
  });
  return out;
}

}  // namespace intentkg
