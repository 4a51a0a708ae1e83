#include "intentkg/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "intentkg/errors.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

using nlohmann::json;

std::string_view to_string(ItemKind k) {
  switch (k) {
    case ItemKind::Query: return "query";
    case ItemKind::Service: return "service";
    case ItemKind::Bill: return "bill";
    case ItemKind::Coupon: return "coupon";
    case ItemKind::Store: return "store";
    case ItemKind::Review: return "review";
  }
  return "?";
}

ItemKind item_kind_from_string(std::string_view s) {
  if (s == "query") return ItemKind::Query;
  if (s == "service") return ItemKind::Service;
  if (s == "bill") return ItemKind::Bill;
  if (s == "coupon") return ItemKind::Coupon;
  if (s == "store") return ItemKind::Store;
  if (s == "review") return ItemKind::Review;
  throw LookupError("unknown item kind: " + std::string(s));
}

std::vector<double> encode_item(const Item& item, const TextEncoder& encoder, int image_dim) {
  if (item.text.empty() && item.image_vec.empty()) {
    throw std::invalid_argument("item " + item.id + " has neither text nor image vector");
  }
  std::vector<double> v = encoder.encode(item.text);
  if (image_dim > 0) {
    std::vector<double> img = item.image_vec;
    img.resize(image_dim, 0.0);
    v.insert(v.end(), img.begin(), img.end());
  }
  return v;
}

namespace {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// dLoss/dz for one (item, intent) pair at logit z with label y.
double loss_and_dz(double z, bool positive, const MatcherConfig& cfg, double* dloss_dz) {
  double p = sigmoid(z);
  p = std::min(std::max(p, 1e-12), 1.0 - 1e-12);
  if (cfg.loss == MatchLoss::Bce) {
    *dloss_dz = p - (positive ? 1.0 : 0.0);
    return positive ? -std::log(p) : -std::log(1.0 - p);
  }
  // asymmetric focal loss: L+ = -(1-p)^g+ log p, L- = -p^g- log(1-p)
  if (positive) {
    double g = cfg.gamma_pos;
    double w = std::pow(1.0 - p, g);
    *dloss_dz = g * p * w * std::log(p) - (1.0 - p) * w;
    return -w * std::log(p);
  }
  double g = cfg.gamma_neg;
  double w = std::pow(p, g);
  *dloss_dz = -g * w * (1.0 - p) * std::log(1.0 - p) + p * w;
  return -w * std::log(1.0 - p);
}

struct Dataset {
  Mat items;    // n_items x item_dim (row = encoded item)
  Mat intents;  // n_intents x d (frozen table order)
  std::vector<std::vector<char>> positive;  // n_items x n_intents
};

Dataset build_dataset(const std::vector<LabeledItem>& data, const IntentEmbeddingTable& table,
                      const TextEncoder& encoder, const MatcherConfig& cfg) {
  if (data.empty()) throw std::invalid_argument("train_matcher: empty dataset");
  Dataset ds;
  const int n_items = static_cast<int>(data.size());
  const int n_intents = static_cast<int>(table.intent_order.size());
  std::vector<double> first = encode_item(data[0].item, encoder, cfg.image_dim);
  ds.items = Mat(n_items, static_cast<int>(first.size()));
  ds.positive.assign(n_items, std::vector<char>(n_intents, 0));
  for (int i = 0; i < n_items; ++i) {
    std::vector<double> v = encode_item(data[i].item, encoder, cfg.image_dim);
    for (size_t j = 0; j < v.size(); ++j) ds.items.at(i, static_cast<int>(j)) = v[j];
    for (NodeId pos : data[i].positives) {
      auto it = std::lower_bound(table.intent_order.begin(), table.intent_order.end(), pos);
      if (it == table.intent_order.end() || *it != pos) {
        throw LookupError("train_matcher: intent " + std::to_string(pos) +
                          " missing from embedding table");
      }
      ds.positive[i][it - table.intent_order.begin()] = 1;
    }
  }
  ds.intents = table.vectors;
  return ds;
}

// Mean loss with logits = items * Q + bias, Q holding one weight column per
// intent. Training runs here (well-conditioned regardless of the intent
// vectors); the intent basis is folded back into the projection afterwards.
double loss_and_grad_class(const Dataset& ds, const Mat& q, double bias,
                           const MatcherConfig& cfg, Mat* grad_q, double* grad_bias) {
  const int n_items = ds.items.rows();
  const int n_intents = ds.intents.rows();
  Mat logits = matmul(ds.items, q);  // n_items x n_intents
  const double inv = 1.0 / (static_cast<double>(n_items) * n_intents);
  double total = 0.0;
  Mat dz(n_items, n_intents);
  for (int i = 0; i < n_items; ++i) {
    for (int j = 0; j < n_intents; ++j) {
      double d = 0.0;
      total += loss_and_dz(logits.at(i, j) + bias, ds.positive[i][j], cfg, &d);
      dz.at(i, j) = d * inv;
    }
  }
  if (grad_q) {
    *grad_q = matmul(ds.items, dz, true, false);
  }
  if (grad_bias) {
    double s = 0.0;
    for (double v : dz.data()) s += v;
    *grad_bias = s;
  }
  return total * inv;
}

// Mean loss over all (item, intent) pairs plus gradient accumulation.
double loss_and_grad(const Dataset& ds, const MatcherParams& params, Mat* grad_proj,
                     double* grad_bias) {
  const int n_items = ds.items.rows();
  const int n_intents = ds.intents.rows();
  Mat projected = matmul(ds.items, params.projection);  // n_items x d
  Mat logits = matmul(projected, ds.intents, false, true);
  const double inv = 1.0 / (static_cast<double>(n_items) * n_intents);

  double total = 0.0;
  Mat dz(n_items, n_intents);
  for (int i = 0; i < n_items; ++i) {
    for (int j = 0; j < n_intents; ++j) {
      double d = 0.0;
      total += loss_and_dz(logits.at(i, j) + params.bias, ds.positive[i][j], params.config, &d);
      dz.at(i, j) = d * inv;
    }
  }
  if (grad_proj) {
    // dL/dP = items' * dz * intents
    Mat tmp = matmul(dz, ds.intents);  // n_items x d
    *grad_proj = matmul(ds.items, tmp, true, false);
  }
  if (grad_bias) {
    double s = 0.0;
    for (double v : dz.data()) s += v;
    *grad_bias = s;
  }
  return total * inv;
}

}  // namespace

double score_item_intent(const std::vector<double>& item_vec,
                         const std::vector<double>& intent_vec, const MatcherParams& params) {
  if (static_cast<int>(item_vec.size()) != params.projection.rows() ||
      static_cast<int>(intent_vec.size()) != params.projection.cols()) {
    throw DimensionError("score_item_intent: got " + std::to_string(item_vec.size()) + "x" +
                         std::to_string(intent_vec.size()) + ", projection is " +
                         std::to_string(params.projection.rows()) + "x" +
                         std::to_string(params.projection.cols()));
  }
  double z = params.bias;
  for (int i = 0; i < params.projection.rows(); ++i) {
    double pi = 0.0;
    const double* prow = params.projection.row(i);
    for (int j = 0; j < params.projection.cols(); ++j) pi += prow[j] * intent_vec[j];
    z += item_vec[i] * pi;
  }
  return sigmoid(z);
}

MatcherParams train_matcher(const std::vector<LabeledItem>& dataset,
                            const IntentEmbeddingTable& table, const TextEncoder& encoder,
                            const MatcherConfig& config) {
  Dataset ds = build_dataset(dataset, table, encoder, config);
  MatcherParams params;
  params.config = config;
  params.bias = 0.0;

  // Descend on per-intent weight columns; the intent vectors only re-enter
  // through the fold below. This keeps the conditioning independent of how
  // entangled the GCN rows are.
  const int n_intents = ds.intents.rows();
  Mat gram = matmul(ds.intents, ds.intents, false, true);
  double ridge = 0.0;
  for (int i = 0; i < n_intents; ++i) ridge += gram.at(i, i);
  ridge = 1e-8 * ridge / n_intents + 1e-12;
  for (int i = 0; i < n_intents; ++i) gram.at(i, i) += ridge;
  Mat basis = cholesky_solve(gram, ds.intents);  // n_intents x d

  Mat q(ds.items.cols(), n_intents);
  Mat grad_q;
  double grad_bias = 0.0;
  Mat vel_q(q.rows(), q.cols());
  double vel_bias = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss = loss_and_grad_class(ds, q, params.bias, config, &grad_q, &grad_bias);
    params.loss_curve.push_back(loss);
    for (size_t i = 0; i < vel_q.size(); ++i) {
      vel_q.data()[i] = config.momentum * vel_q.data()[i] - grad_q.data()[i];
    }
    vel_bias = config.momentum * vel_bias - grad_bias;
    add_inplace(q, vel_q, config.learning_rate);
    params.bias += config.learning_rate * vel_bias;
    if (config.weight_decay > 0.0) {
      // decoupled shrink, independent of the learning-rate scale
      for (double& v : q.data()) v *= 1.0 - config.weight_decay;
    }
  }
  // fold: projection * intent_i reproduces the learned class weights
  params.projection = matmul(q, basis);
  params.final_loss = loss_and_grad(ds, params, nullptr, nullptr);
  return params;
}

double matcher_gradient_check(const MatcherParams& params, const std::vector<LabeledItem>& dataset,
                              const IntentEmbeddingTable& table, const TextEncoder& encoder,
                              double epsilon) {
  if (dataset.empty()) throw std::invalid_argument("gradient_check: empty dataset");
  Dataset ds = build_dataset(dataset, table, encoder, params.config);
  Mat grad_proj;
  double grad_bias = 0.0;
  MatcherParams work = params;
  loss_and_grad(ds, work, &grad_proj, &grad_bias);

  auto rel_err = [](double analytic, double numeric) {
    double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    double err = std::fabs(analytic - numeric) / denom;
    return (std::fabs(analytic) < 1e-10 && std::fabs(numeric) < 1e-10) ? 0.0 : err;
  };

  double max_err = 0.0;
  for (size_t k = 0; k < work.projection.size(); ++k) {
    double saved = work.projection.data()[k];
    work.projection.data()[k] = saved + epsilon;
    double up = loss_and_grad(ds, work, nullptr, nullptr);
    work.projection.data()[k] = saved - epsilon;
    double down = loss_and_grad(ds, work, nullptr, nullptr);
    work.projection.data()[k] = saved;
    double numeric = (up - down) / (2.0 * epsilon);
    max_err = std::max(max_err, rel_err(grad_proj.data()[k], numeric));
  }
  {
    double saved = work.bias;
    work.bias = saved + epsilon;
    double up = loss_and_grad(ds, work, nullptr, nullptr);
    work.bias = saved - epsilon;
    double down = loss_and_grad(ds, work, nullptr, nullptr);
    work.bias = saved;
    max_err = std::max(max_err, rel_err(grad_bias, (up - down) / (2.0 * epsilon)));
  }
  return max_err;
}

std::vector<IntentScore> label_item(const Item& item, const IntentEmbeddingTable& table,
                                    const MatcherParams& params, const TextEncoder& encoder,
                                    int top_k, double threshold) {
  std::vector<double> v = encode_item(item, encoder, params.config.image_dim);
  std::vector<IntentScore> scored;
  for (size_t i = 0; i < table.intent_order.size(); ++i) {
    const double* row = table.vectors.row(static_cast<int>(i));
    std::vector<double> intent_vec(row, row + table.vectors.cols());
    double s = score_item_intent(v, intent_vec, params);
    if (s >= threshold) scored.push_back({table.intent_order[i], s});
  }
  std::sort(scored.begin(), scored.end(), [](const IntentScore& a, const IntentScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.intent < b.intent;
  });
  if (top_k >= 0 && static_cast<int>(scored.size()) > top_k) scored.resize(top_k);
  return scored;
}

std::string serialize_matcher(const MatcherParams& params) {
  std::ostringstream os;
  json meta;
  meta["t"] = "meta";
  meta["version"] = 1;
  meta["kind"] = "matcher";
  meta["loss"] = params.config.loss == MatchLoss::Bce ? "bce" : "asymmetric";
  meta["gamma_pos"] = params.config.gamma_pos;
  meta["gamma_neg"] = params.config.gamma_neg;
  meta["learning_rate"] = params.config.learning_rate;
  meta["momentum"] = params.config.momentum;
  meta["weight_decay"] = params.config.weight_decay;
  meta["epochs"] = params.config.epochs;
  meta["image_dim"] = params.config.image_dim;
  meta["bias"] = params.bias;
  meta["final_loss"] = params.final_loss;
  os << meta.dump() << "\n";
  json proj;
  proj["t"] = "mat";
  proj["name"] = "projection";
  proj["rows"] = params.projection.rows();
  proj["cols"] = params.projection.cols();
  proj["data"] = params.projection.data();
  os << proj.dump() << "\n";
  return os.str();
}

MatcherParams parse_matcher(const std::string& content) {
  MatcherParams params;
  std::istringstream is(content);
  std::string line;
  size_t line_no = 0;
  bool have_meta = false, have_proj = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad matcher record: ") + e.what(), line_no);
    }
    std::string t = j.value("t", "");
    if (t == "meta") {
      if (j.value("version", 0) != 1) throw ParseError("unsupported matcher version", line_no);
      params.config.loss = j.value("loss", "bce") == "bce" ? MatchLoss::Bce : MatchLoss::Asymmetric;
      params.config.gamma_pos = j.value("gamma_pos", 0.0);
      params.config.gamma_neg = j.value("gamma_neg", 2.0);
      params.config.learning_rate = j.value("learning_rate", 100.0);
      params.config.momentum = j.value("momentum", 0.9);
      params.config.weight_decay = j.value("weight_decay", 0.0);
      params.config.epochs = j.value("epochs", 1000);
      params.config.image_dim = j.value("image_dim", 0);
      params.bias = j.value("bias", 0.0);
      params.final_loss = j.value("final_loss", 0.0);
      have_meta = true;
    } else if (t == "mat") {
      int rows = j.at("rows").get<int>();
      int cols = j.at("cols").get<int>();
      std::vector<double> data = j.at("data").get<std::vector<double>>();
      if (static_cast<int>(data.size()) != rows * cols) {
        throw ParseError("matrix size mismatch", line_no);
      }
      params.projection = Mat(rows, cols);
      params.projection.data() = data;
      have_proj = true;
    } else {
      throw ParseError("unknown matcher record '" + t + "'", line_no);
    }
  }
  if (!have_meta || !have_proj) throw ParseError("incomplete matcher file", line_no + 1);
  return params;
}

void save_matcher(const MatcherParams& params, const std::string& path) {
  write_text_file(path, serialize_matcher(params));
}

MatcherParams load_matcher(const std::string& path) {
  return parse_matcher(read_text_file(path));
}

}  // namespace intentkg
