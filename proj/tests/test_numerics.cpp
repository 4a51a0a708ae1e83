#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "intentkg/autograd.hpp"
#include "intentkg/gcn.hpp"
#include "intentkg/graph.hpp"
#include "intentkg/matrix.hpp"
#include "intentkg/text.hpp"
#include "intentkg/util.hpp"

using namespace intentkg;

namespace {

Mat random_mat(int r, int c, Rng& rng, double scale = 1.0) {
  Mat m(r, c);
  for (double& v : m.data()) v = (2.0 * rng.next_double() - 1.0) * scale;
  return m;
}

// FD check of a scalar function of one leaf against the tape gradient.
double max_rel_err_fd(const std::function<Var(Tape&, Var)>& build, const Mat& x0) {
  Tape t;
  Var x = t.leaf(x0);
  Var y = build(t, x);
  t.backward(y);
  Mat analytic = t.grad(x);

  double max_err = 0.0;
  Mat xp = x0;
  const double eps = 1e-6;
  for (size_t i = 0; i < xp.size(); ++i) {
    double saved = xp.data()[i];
    auto eval = [&](double v) {
      xp.data()[i] = v;
      Tape t2;
      Var x2 = t2.leaf(xp);
      return t2.value(build(t2, x2)).at(0, 0);
    };
    double up = eval(saved + eps);
    double down = eval(saved - eps);
    xp.data()[i] = saved;
    double numeric = (up - down) / (2.0 * eps);
    double a = analytic.data()[i];
    double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
    max_err = std::max(max_err, std::fabs(a - numeric) / denom);
  }
  return max_err;
}

}  // namespace

TEST_CASE("matmul transpose variants agree with the naive definition") {
  Rng rng(1);
  Mat a = random_mat(4, 3, rng);
  Mat b = random_mat(3, 5, rng);
  Mat c = matmul(a, b);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 5; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a.at(i, k) * b.at(k, j);
      CHECK(c.at(i, j) == doctest::Approx(s).epsilon(1e-12));
    }
  }
  Mat at = transpose(a);
  Mat bt = transpose(b);
  CHECK(matmul(a, bt, false, true) == matmul(a, transpose(bt)));
  CHECK(matmul(at, b, true, false) == matmul(transpose(at), b));
}

TEST_CASE("exact_sum is permutation independent and correctly rounded") {
  Rng rng(2);
  std::vector<double> vals;
  for (int i = 0; i < 300; ++i) {
    vals.push_back((rng.next_double() - 0.5) * std::pow(10.0, double(rng.next_below(20)) - 10.0));
  }
  double ref = exact_sum(vals.data(), vals.size());
  for (int round = 0; round < 20; ++round) {
    rng.shuffle(vals);
    CHECK(exact_sum(vals.data(), vals.size()) == ref);  // bit-identical
  }
  // catastrophic cancellation case
  std::vector<double> hard{1e16, 1.0, -1e16};
  CHECK(exact_sum(hard.data(), hard.size()) == 1.0);
}

TEST_CASE("cholesky_solve inverts SPD systems") {
  Rng rng(3);
  Mat b = random_mat(6, 6, rng);
  Mat a = matmul(b, b, false, true);
  for (int i = 0; i < 6; ++i) a.at(i, i) += 1.0;
  Mat rhs = random_mat(6, 2, rng);
  Mat x = cholesky_solve(a, rhs);
  Mat back = matmul(a, x);
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-9));
  }
}

TEST_CASE("autograd ops pass central-difference checks") {
  Rng rng(4);
  Mat x0 = random_mat(3, 4, rng);
  Mat w = random_mat(4, 4, rng);
  Mat g1 = random_mat(1, 4, rng, 0.5);
  Mat b1 = random_mat(1, 4, rng, 0.5);
  for (double& v : g1.data()) v += 1.5;  // keep gains away from zero

  auto sum_all = [](Tape& t, Var v) {
    Mat ones(t.value(v).cols(), 1);
    ones.fill(1.0);
    Mat onesr(1, t.value(v).rows());
    onesr.fill(1.0);
    Var colsum = t.matmul(v, t.leaf(ones));
    return t.matmul(t.leaf(onesr), colsum);
  };

  CHECK(max_rel_err_fd([&](Tape& t, Var x) {
          return sum_all(t, t.relu(t.matmul(x, t.leaf(w))));
        }, x0) < 1e-5);
  CHECK(max_rel_err_fd([&](Tape& t, Var x) {
          return sum_all(t, t.softmax_rows(t.scale(x, 2.5)));
        }, x0) < 1e-5);
  CHECK(max_rel_err_fd([&](Tape& t, Var x) {
          return sum_all(t, t.layer_norm(x, t.leaf(g1), t.leaf(b1)));
        }, x0) < 1e-4);
  CHECK(max_rel_err_fd([&](Tape& t, Var x) {
          return sum_all(t, t.slice_cols(t.matmul(x, t.leaf(w)), 1, 3));
        }, x0) < 1e-5);
  CHECK(max_rel_err_fd([&](Tape& t, Var x) {
          return t.cross_entropy_rows(t.matmul(x, t.leaf(w)), {0, 2, 1});
        }, x0) < 1e-5);
  CHECK(max_rel_err_fd([&](Tape& t, Var x) {
          std::vector<std::vector<int>> idx{{0, -1}, {2, 1}};
          Var e = t.embed_rows({x, x}, idx);
          return sum_all(t, t.relu(e));
        }, x0) < 1e-5);
}

TEST_CASE("normalized adjacency matches hand results and stays symmetric") {
  ConceptGraph g;
  NodeId a = g.add_node(NodeKind::Intent, "a");
  Mat one = normalized_adjacency(g);
  REQUIRE(one.rows() == 1);
  CHECK(one.at(0, 0) == 1.0);

  NodeId b = g.add_node(NodeKind::Intent, "b");
  g.add_edge(a, EdgeKind::Consequent, b);
  Mat two = normalized_adjacency(g);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) CHECK(two.at(i, j) == 0.5);
  }

  // fuzzed: symmetric, matches an independent dense recomputation
  Rng rng(6);
  ConceptGraph big;
  std::vector<NodeId> ids;
  for (int i = 0; i < 12; ++i) ids.push_back(big.add_node(NodeKind::Intent, "i" + std::to_string(i)));
  for (int e = 0; e < 20; ++e) {
    NodeId s = ids[rng.next_below(ids.size())];
    NodeId d = ids[rng.next_below(ids.size())];
    if (s == d) continue;
    try {
      if (rng.next_below(2)) {
        big.add_edge(s, EdgeKind::Consequent, d);
      } else {
        big.add_edge(s, EdgeKind::IsA, d);
      }
    } catch (const CycleError&) {
    }
  }
  Mat adj = normalized_adjacency(big);
  // independent recomputation
  int n = static_cast<int>(ids.size());
  Mat raw(n, n);
  for (const Edge& e : big.edges()) {
    int si = int(std::find(ids.begin(), ids.end(), e.src) - ids.begin());
    int di = int(std::find(ids.begin(), ids.end(), e.dst) - ids.begin());
    raw.at(si, di) = 1.0;
    raw.at(di, si) = 1.0;
  }
  for (int i = 0; i < n; ++i) raw.at(i, i) = 1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double deg_i = 0.0, deg_j = 0.0;
      for (int k = 0; k < n; ++k) {
        deg_i += raw.at(i, k);
        deg_j += raw.at(j, k);
      }
      double want = raw.at(i, j) / std::sqrt(deg_i * deg_j);
      CHECK(adj.at(i, j) == doctest::Approx(want).epsilon(1e-12));
      CHECK(adj.at(i, j) == adj.at(j, i));
    }
  }
}

TEST_CASE("gcn_forward identity and hand-computed two-node case") {
  Mat id2 = Mat::identity(2);
  Mat out = gcn_forward(id2, id2, {Mat::identity(2)});
  CHECK(out == id2);

  Mat adj = Mat::from_rows({{0.5, 0.5}, {0.5, 0.5}});
  Mat got = gcn_forward(adj, Mat::identity(2), {Mat::identity(2)});
  CHECK(got == Mat::from_rows({{0.5, 0.5}, {0.5, 0.5}}));

  CHECK_THROWS_AS(gcn_forward(adj, Mat(3, 2), {Mat::identity(2)}), DimensionError);
  CHECK_THROWS_AS(gcn_forward(adj, id2, {Mat(3, 3)}), DimensionError);
}

TEST_CASE("gcn_forward is exactly permutation equivariant") {
  Rng rng(7);
  for (int round = 0; round < 5; ++round) {
    const int n = 10;
    Mat raw(n, n);
    for (int e = 0; e < 18; ++e) {
      int i = static_cast<int>(rng.next_below(n));
      int j = static_cast<int>(rng.next_below(n));
      if (i == j) continue;
      raw.at(i, j) = raw.at(j, i) = 1.0;
    }
    for (int i = 0; i < n; ++i) raw.at(i, i) = 1.0;
    Mat adj(n, n);
    std::vector<double> deg(n, 0.0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) deg[i] += raw.at(i, j);
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) adj.at(i, j) = raw.at(i, j) / std::sqrt(deg[i] * deg[j]);
    }
    Mat features = random_mat(n, 6, rng);
    std::vector<Mat> weights{random_mat(6, 5, rng), random_mat(5, 4, rng)};
    Mat base = gcn_forward(adj, features, weights);

    // random permutation
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    Mat padj(n, n), pfeat(n, 6);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) padj.at(i, j) = adj.at(perm[i], perm[j]);
      for (int j = 0; j < 6; ++j) pfeat.at(i, j) = features.at(perm[i], j);
    }
    Mat permuted = gcn_forward(padj, pfeat, weights);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 4; ++j) {
        CHECK(permuted.at(i, j) == base.at(perm[i], j));  // bit-exact
      }
    }
  }
}

TEST_CASE("intent embedding build and table round-trip") {
  ConceptGraph g;
  NodeId a = g.add_node(NodeKind::Intent, "order coffee");
  NodeId b = g.add_node(NodeKind::Intent, "buy coffee beans");
  g.add_edge(a, EdgeKind::Consequent, b);
  g.add_node(NodeKind::Intent, "pay rent money");

  TextEncoder enc;
  GcnConfig cfg;
  cfg.hidden_dim = 16;
  cfg.out_dim = 8;
  IntentEmbeddingTable table = build_intent_embeddings(g, enc, cfg);
  CHECK(table.intent_order.size() == 3);
  CHECK(table.dim() == 8);
  CHECK(table.vectors.all_finite());
  CHECK(table.graph_fingerprint == g.fingerprint());
  CHECK(table.row_for(a) != nullptr);
  CHECK(table.row_for(999) == nullptr);

  IntentEmbeddingTable back = parse_embedding_table(serialize_embedding_table(table));
  CHECK(back.intent_order == table.intent_order);
  CHECK(back.vectors == table.vectors);  // bit-exact round trip

  // same seed, same graph -> identical table
  IntentEmbeddingTable again = build_intent_embeddings(g, enc, cfg);
  CHECK(again.vectors == table.vectors);
}
