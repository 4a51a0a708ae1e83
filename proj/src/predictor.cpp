#include "intentkg/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "intentkg/errors.hpp"

namespace intentkg {

using nlohmann::json;

void PredictorConfig::check() const {
  if (dim < 2 || heads < 1 || dim % heads != 0) {
    throw ConfigError("predictor: dim must be positive and divisible by heads");
  }
  if (context < 1 || horizon < 1) throw ConfigError("predictor: context and horizon must be >= 1");
  if (enc_layers < 1 || dec_layers < 1) throw ConfigError("predictor: need >= 1 layer each");
}

int PredictorModel::intent_index(const std::string& key) const {
  if (key == intent_vocab[0]) return 0;
  auto it = std::lower_bound(intent_vocab.begin() + 1, intent_vocab.end(), key);
  if (it == intent_vocab.end() || *it != key) {
    throw LookupError("unknown intent '" + key + "'");
  }
  return static_cast<int>(it - intent_vocab.begin());
}

int PredictorModel::location_index(const std::string& key) const {
  auto it = std::lower_bound(location_vocab.begin() + 1, location_vocab.end(), key);
  if (it == location_vocab.end() || *it != key) return 0;  // <unk>
  return static_cast<int>(it - location_vocab.begin());
}

namespace {

void visit_layer(const std::string& prefix, EncoderLayerParams& l,
                 const std::function<void(const std::string&, Mat&)>& fn) {
  fn(prefix + ".ln1.gain", l.ln1.gain);
  fn(prefix + ".ln1.bias", l.ln1.bias);
  fn(prefix + ".attn.wq", l.attn.wq);
  fn(prefix + ".attn.wk", l.attn.wk);
  fn(prefix + ".attn.wv", l.attn.wv);
  fn(prefix + ".attn.wo", l.attn.wo);
  fn(prefix + ".ln2.gain", l.ln2.gain);
  fn(prefix + ".ln2.bias", l.ln2.bias);
  fn(prefix + ".ffn.w1", l.ffn.w1);
  fn(prefix + ".ffn.b1", l.ffn.b1);
  fn(prefix + ".ffn.w2", l.ffn.w2);
  fn(prefix + ".ffn.b2", l.ffn.b2);
}

void visit_layer(const std::string& prefix, DecoderLayerParams& l,
                 const std::function<void(const std::string&, Mat&)>& fn) {
  fn(prefix + ".ln1.gain", l.ln1.gain);
  fn(prefix + ".ln1.bias", l.ln1.bias);
  fn(prefix + ".self.wq", l.self_attn.wq);
  fn(prefix + ".self.wk", l.self_attn.wk);
  fn(prefix + ".self.wv", l.self_attn.wv);
  fn(prefix + ".self.wo", l.self_attn.wo);
  fn(prefix + ".ln2.gain", l.ln2.gain);
  fn(prefix + ".ln2.bias", l.ln2.bias);
  fn(prefix + ".cross.wq", l.cross_attn.wq);
  fn(prefix + ".cross.wk", l.cross_attn.wk);
  fn(prefix + ".cross.wv", l.cross_attn.wv);
  fn(prefix + ".cross.wo", l.cross_attn.wo);
  fn(prefix + ".ln3.gain", l.ln3.gain);
  fn(prefix + ".ln3.bias", l.ln3.bias);
  fn(prefix + ".ffn.w1", l.ffn.w1);
  fn(prefix + ".ffn.b1", l.ffn.b1);
  fn(prefix + ".ffn.w2", l.ffn.w2);
  fn(prefix + ".ffn.b2", l.ffn.b2);
}

}  // namespace

void PredictorModel::for_each_param(const std::function<void(const std::string&, Mat&)>& fn) {
  fn("intent_embed", intent_embed);
  fn("loc_embed", loc_embed);
  fn("minute_embed", minute_embed);
  fn("hour_embed", hour_embed);
  fn("wday_embed", wday_embed);
  fn("month_embed", month_embed);
  for (size_t i = 0; i < encoder.size(); ++i) {
    visit_layer("enc" + std::to_string(i), encoder[i], fn);
  }
  for (size_t i = 0; i < decoder.size(); ++i) {
    visit_layer("dec" + std::to_string(i), decoder[i], fn);
  }
  fn("enc_ln.gain", enc_ln.gain);
  fn("enc_ln.bias", enc_ln.bias);
  fn("dec_ln.gain", dec_ln.gain);
  fn("dec_ln.bias", dec_ln.bias);
  fn("out_proj", out_proj);
  fn("out_bias", out_bias);
}

void PredictorModel::for_each_param_const(
    const std::function<void(const std::string&, const Mat&)>& fn) const {
  const_cast<PredictorModel*>(this)->for_each_param(
      [&](const std::string& name, Mat& m) { fn(name, m); });
}

uint64_t PredictorModel::fingerprint() const {
  return fnv1a64(serialize_predictor(*this));
}

namespace {

void allocate_params(PredictorModel& m) {
  const PredictorConfig& c = m.config;
  const int d = c.dim;
  const int f = c.ffn_mult * d;
  const int vi = static_cast<int>(m.intent_vocab.size());
  const int vl = static_cast<int>(m.location_vocab.size());
  m.intent_embed = Mat(vi, d);
  m.loc_embed = Mat(vl, d);
  m.minute_embed = Mat(60, d);
  m.hour_embed = Mat(24, d);
  m.wday_embed = Mat(7, d);
  m.month_embed = Mat(12, d);
  auto ln = [&](LayerNormParams& p) {
    p.gain = Mat(1, d);
    p.bias = Mat(1, d);
  };
  auto attn = [&](AttentionParams& p) {
    p.wq = Mat(d, d);
    p.wk = Mat(d, d);
    p.wv = Mat(d, d);
    p.wo = Mat(d, d);
  };
  auto ffn = [&](FfnParams& p) {
    p.w1 = Mat(d, f);
    p.b1 = Mat(1, f);
    p.w2 = Mat(f, d);
    p.b2 = Mat(1, d);
  };
  m.encoder.resize(c.enc_layers);
  for (auto& l : m.encoder) {
    ln(l.ln1);
    ln(l.ln2);
    attn(l.attn);
    ffn(l.ffn);
  }
  m.decoder.resize(c.dec_layers);
  for (auto& l : m.decoder) {
    ln(l.ln1);
    ln(l.ln2);
    ln(l.ln3);
    attn(l.self_attn);
    attn(l.cross_attn);
    ffn(l.ffn);
  }
  ln(m.enc_ln);
  ln(m.dec_ln);
  m.out_proj = Mat(d, vi);
  m.out_bias = Mat(1, vi);
}

void randomize_params(PredictorModel& m, Rng& rng) {
  m.for_each_param([&](const std::string& name, Mat& mat) {
    bool is_gain = name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
    bool is_bias = name.find("bias") != std::string::npos ||
                   (name.size() >= 3 && (name.compare(name.size() - 3, 3, ".b1") == 0 ||
                                         name.compare(name.size() - 3, 3, ".b2") == 0));
    if (is_gain) {
      mat.fill(1.0);
    } else if (is_bias) {
      mat.fill(0.0);
    } else {
      mat = glorot_uniform(mat.rows(), mat.cols(), rng);
    }
  });
}

double mean_row_norm(const Mat& m) {
  double s = 0.0;
  for (int i = 0; i < m.rows(); ++i) s += l2_norm(m.row(i), m.cols());
  return m.rows() ? s / m.rows() : 0.0;
}

// Copy KG vectors into the intent embedding rows, rescaled to the typical
// random-init row norm so training starts from comparable magnitudes.
void fuse_kg_rows(PredictorModel& m, const IntentEmbeddingTable& table,
                  const ConceptGraph& graph) {
  const int d = m.config.dim;
  Mat projected = table.vectors;
  if (table.dim() != d) {
    Rng rng(m.config.seed ^ 0x9e3779b9ULL);
    Mat proj = glorot_uniform(table.dim(), d, rng);
    projected = matmul(table.vectors, proj);
  }
  double target_row = mean_row_norm(m.intent_embed);
  for (size_t v = 1; v < m.intent_vocab.size(); ++v) {
    NodeId node = graph.find_by_label(NodeKind::Intent, m.intent_vocab[v]);
    if (node == kNoNode) continue;
    auto it = std::lower_bound(table.intent_order.begin(), table.intent_order.end(), node);
    if (it == table.intent_order.end() || *it != node) continue;
    int row = static_cast<int>(it - table.intent_order.begin());
    double norm = l2_norm(projected.row(row), d);
    if (norm == 0.0) continue;
    for (int j = 0; j < d; ++j) {
      m.intent_embed.at(static_cast<int>(v), j) = projected.at(row, j) * (target_row / norm);
    }
  }
}

Mat positional_encoding(int len, int dim) {
  Mat pe(len, dim);
  for (int pos = 0; pos < len; ++pos) {
    for (int i = 0; i < dim; i += 2) {
      double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
      pe.at(pos, i) = std::sin(pos * freq);
      if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

Mat causal_mask(int len) {
  Mat m(len, len);
  for (int i = 0; i < len; ++i) {
    for (int j = i + 1; j < len; ++j) m.at(i, j) = -1e9;
  }
  return m;
}

struct VarLN {
  Var gain, bias;
};
struct VarAttn {
  Var wq, wk, wv, wo;
};
struct VarFfn {
  Var w1, b1, w2, b2;
};
struct VarEncLayer {
  VarLN ln1, ln2;
  VarAttn attn;
  VarFfn ffn;
};
struct VarDecLayer {
  VarLN ln1, ln2, ln3;
  VarAttn self_attn, cross_attn;
  VarFfn ffn;
};

// Leaf vars for every parameter, in for_each_param order (flat) plus a
// structured view. The cursor walk below must mirror for_each_param.
struct ModelVars {
  std::vector<Var> flat;
  Var intent_embed, loc_embed, minute_embed, hour_embed, wday_embed, month_embed;
  std::vector<VarEncLayer> enc;
  std::vector<VarDecLayer> dec;
  VarLN enc_ln, dec_ln;
  Var out_proj, out_bias;
  std::vector<Var> tables;  // embedding tables in embed_rows order
};

ModelVars make_vars(Tape& tape, PredictorModel& model) {
  ModelVars mv;
  model.for_each_param(
      [&](const std::string&, Mat& mat) { mv.flat.push_back(tape.leaf(mat)); });
  size_t c = 0;
  auto next = [&]() { return mv.flat[c++]; };
  mv.intent_embed = next();
  mv.loc_embed = next();
  mv.minute_embed = next();
  mv.hour_embed = next();
  mv.wday_embed = next();
  mv.month_embed = next();
  auto take_ln = [&](VarLN& ln) {
    ln.gain = next();
    ln.bias = next();
  };
  auto take_attn = [&](VarAttn& a) {
    a.wq = next();
    a.wk = next();
    a.wv = next();
    a.wo = next();
  };
  auto take_ffn = [&](VarFfn& f) {
    f.w1 = next();
    f.b1 = next();
    f.w2 = next();
    f.b2 = next();
  };
  mv.enc.resize(model.encoder.size());
  for (auto& l : mv.enc) {
    take_ln(l.ln1);
    take_attn(l.attn);
    take_ln(l.ln2);
    take_ffn(l.ffn);
  }
  mv.dec.resize(model.decoder.size());
  for (auto& l : mv.dec) {
    take_ln(l.ln1);
    take_attn(l.self_attn);
    take_ln(l.ln2);
    take_attn(l.cross_attn);
    take_ln(l.ln3);
    take_ffn(l.ffn);
  }
  take_ln(mv.enc_ln);
  take_ln(mv.dec_ln);
  mv.out_proj = next();
  mv.out_bias = next();
  mv.tables = {mv.intent_embed, mv.loc_embed, mv.minute_embed,
               mv.hour_embed,   mv.wday_embed, mv.month_embed};
  return mv;
}

Var multi_head_attention(Tape& t, Var q_in, Var kv_in, const VarAttn& p, int heads,
                         const Mat* mask, std::vector<Mat>* probe) {
  const int d = t.value(q_in).cols();
  const int dk = d / heads;
  Var q = t.matmul(q_in, p.wq);
  Var k = t.matmul(kv_in, p.wk);
  Var v = t.matmul(kv_in, p.wv);
  std::vector<Var> outs;
  for (int h = 0; h < heads; ++h) {
    Var qh = t.slice_cols(q, h * dk, (h + 1) * dk);
    Var kh = t.slice_cols(k, h * dk, (h + 1) * dk);
    Var vh = t.slice_cols(v, h * dk, (h + 1) * dk);
    Var scores = t.scale(t.matmul(qh, kh, false, true), 1.0 / std::sqrt(double(dk)));
    if (mask) scores = t.add_const(scores, *mask);
    Var probs = t.softmax_rows(scores);
    if (probe) probe->push_back(t.value(probs));
    outs.push_back(t.matmul(probs, vh));
  }
  return t.matmul(t.concat_cols(outs), p.wo);
}

Var feed_forward(Tape& t, Var x, const VarFfn& p) {
  Var h = t.relu(t.add_rowvec(t.matmul(x, p.w1), p.b1));
  return t.add_rowvec(t.matmul(h, p.w2), p.b2);
}

// Token index rows: [intent, location, minute, hour, weekday(Mon=0), month-1].
// intent = -1 marks a zero-padded query slot.
struct BuiltExample {
  std::vector<std::vector<int>> enc_idx;
  std::vector<std::vector<int>> dec_idx;
  std::vector<int> targets;  // one per decoder row; -1 = no loss
  int slot_begin = 0;
};

std::vector<int> token_indices(int intent_idx, int loc_idx, int64_t ts) {
  GlobalTime g = global_time_utc(ts);
  return {intent_idx, loc_idx, g.minute, g.hour, g.weekday, g.month - 1};
}

Var forward_logits(Tape& t, const ModelVars& mv, const PredictorConfig& cfg,
                   const BuiltExample& ex, std::vector<Mat>* probe) {
  const int d = cfg.dim;
  const double embed_scale = std::sqrt(double(d));  // keep tokens above the positional signal
  Var enc_x = t.add_const(t.scale(t.embed_rows(mv.tables, ex.enc_idx), embed_scale),
                          positional_encoding(static_cast<int>(ex.enc_idx.size()), d));
  for (const VarEncLayer& l : mv.enc) {
    Var h = t.layer_norm(enc_x, l.ln1.gain, l.ln1.bias);
    enc_x = t.add(enc_x, multi_head_attention(t, h, h, l.attn, cfg.heads, nullptr, probe));
    Var h2 = t.layer_norm(enc_x, l.ln2.gain, l.ln2.bias);
    enc_x = t.add(enc_x, feed_forward(t, h2, l.ffn));
  }
  Var enc_out = t.layer_norm(enc_x, mv.enc_ln.gain, mv.enc_ln.bias);

  const int m = static_cast<int>(ex.dec_idx.size());
  Mat mask = causal_mask(m);
  Var dec_x = t.add_const(t.scale(t.embed_rows(mv.tables, ex.dec_idx), embed_scale),
                          positional_encoding(m, d));
  for (const VarDecLayer& l : mv.dec) {
    Var h = t.layer_norm(dec_x, l.ln1.gain, l.ln1.bias);
    dec_x = t.add(dec_x, multi_head_attention(t, h, h, l.self_attn, cfg.heads, &mask, probe));
    Var h2 = t.layer_norm(dec_x, l.ln2.gain, l.ln2.bias);
    dec_x = t.add(dec_x,
                  multi_head_attention(t, h2, enc_out, l.cross_attn, cfg.heads, nullptr, probe));
    Var h3 = t.layer_norm(dec_x, l.ln3.gain, l.ln3.bias);
    dec_x = t.add(dec_x, feed_forward(t, h3, l.ffn));
  }
  Var dec_out = t.layer_norm(dec_x, mv.dec_ln.gain, mv.dec_ln.bias);
  Var slots = t.slice_rows(dec_out, ex.slot_begin, m);
  return t.add_rowvec(t.matmul(slots, mv.out_proj), mv.out_bias);
}

}  // namespace

PredictorModel init_predictor(const PredictorConfig& config,
                              const std::vector<std::string>& intent_vocab,
                              const std::vector<std::string>& location_vocab,
                              const IntentEmbeddingTable* kg_table, const ConceptGraph* graph) {
  config.check();
  PredictorModel m;
  m.config = config;
  m.intent_vocab = intent_vocab;
  m.location_vocab = location_vocab;
  if (m.intent_vocab.empty() || m.intent_vocab[0] != "<unk>") {
    throw ConfigError("intent vocabulary must start with <unk>");
  }
  if (!std::is_sorted(m.intent_vocab.begin() + 1, m.intent_vocab.end())) {
    throw ConfigError("intent vocabulary must be sorted after <unk>");
  }
  allocate_params(m);
  Rng rng(config.seed);
  randomize_params(m, rng);
  if (config.fuse_kg) {
    if (!kg_table || !graph) {
      throw ConfigError("fuse_kg set but no embedding table / graph supplied");
    }
    fuse_kg_rows(m, *kg_table, *graph);
  }
  return m;
}

std::vector<double> encode_event(const PredictorModel& model, int intent_idx, int location_idx,
                                 int64_t timestamp) {
  if (intent_idx < 0 || intent_idx >= model.intent_embed.rows()) {
    throw LookupError("encode_event: intent index " + std::to_string(intent_idx) +
                      " out of vocabulary");
  }
  if (location_idx < 0 || location_idx >= model.loc_embed.rows()) {
    throw LookupError("encode_event: location index " + std::to_string(location_idx) +
                      " out of vocabulary");
  }
  GlobalTime g = global_time_utc(timestamp);
  std::vector<double> v(model.config.dim, 0.0);
  auto add_row = [&](const Mat& table, int idx) {
    for (int j = 0; j < model.config.dim; ++j) v[j] += table.at(idx, j);
  };
  add_row(model.intent_embed, intent_idx);
  add_row(model.loc_embed, location_idx);
  add_row(model.minute_embed, g.minute);
  add_row(model.hour_embed, g.hour);
  add_row(model.wday_embed, g.weekday);
  add_row(model.month_embed, g.month - 1);
  return v;
}

namespace {

BuiltExample build_inference_example(const PredictorModel& model,
                                     const std::vector<UserEvent>& context, int horizon,
                                     const std::vector<QuerySlot>& future) {
  if (context.empty()) throw std::invalid_argument("predict: empty context");
  for (size_t i = 1; i < context.size(); ++i) {
    if (context[i].ts < context[i - 1].ts) {
      throw std::invalid_argument("predict: context must be time-sorted");
    }
  }
  if (horizon < 1 || horizon > model.config.horizon) {
    throw std::invalid_argument("predict: horizon out of [1, H]");
  }
  const PredictorConfig& cfg = model.config;
  const int n = static_cast<int>(context.size());
  const int enc_len = std::min(cfg.context, n);
  BuiltExample ex;
  for (int i = n - enc_len; i < n; ++i) {
    const UserEvent& e = context[i];
    ex.enc_idx.push_back(token_indices(model.intent_index(e.intent),
                                       model.location_index(e.location), e.ts));
  }
  const int ctx_len = std::min(cfg.context / 2, enc_len);
  for (int i = enc_len - ctx_len; i < enc_len; ++i) ex.dec_idx.push_back(ex.enc_idx[i]);
  ex.slot_begin = ctx_len;

  const UserEvent& last = context.back();
  int last_loc = model.location_index(last.location);
  for (int k = 0; k < horizon; ++k) {
    int64_t ts = last.ts + 60 * (k + 1);
    int loc = last_loc;
    if (k < static_cast<int>(future.size())) {
      ts = future[k].ts;
      if (!future[k].location.empty()) loc = model.location_index(future[k].location);
    }
    ex.dec_idx.push_back(token_indices(-1, loc, ts));
    ex.targets.push_back(-1);
  }
  return ex;
}

}  // namespace

PredictionResult predict(const PredictorModel& model, const std::vector<UserEvent>& context,
                         int horizon, const std::vector<QuerySlot>& future,
                         std::vector<Mat>* attention_probe) {
  BuiltExample ex = build_inference_example(model, context, horizon, future);
  Tape tape;
  ModelVars mv = make_vars(tape, const_cast<PredictorModel&>(model));
  Var logits = forward_logits(tape, mv, model.config, ex, attention_probe);
  Var probs = tape.softmax_rows(logits);
  const Mat& p = tape.value(probs);

  PredictionResult result;
  result.step_probs.resize(horizon);
  for (int k = 0; k < horizon; ++k) {
    result.step_probs[k].assign(p.row(k), p.row(k) + p.cols());
  }
  std::vector<int> order(p.cols());
  for (int j = 0; j < p.cols(); ++j) order[j] = j;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (result.step_probs[0][a] != result.step_probs[0][b]) {
      return result.step_probs[0][a] > result.step_probs[0][b];
    }
    return model.intent_vocab[a] < model.intent_vocab[b];
  });
  for (int j : order) {
    result.top_k.emplace_back(model.intent_vocab[j], result.step_probs[0][j]);
  }
  return result;
}

std::vector<double> apply_rules(const std::vector<double>& dist,
                                const std::vector<std::string>& recent_intents,
                                const ConceptGraph& graph, double beta,
                                const std::vector<std::string>& intent_vocab,
                                std::vector<RuleExplanation>* explanations, int window,
                                int max_depth) {
  if (beta < 0.0) throw std::invalid_argument("apply_rules: beta must be >= 0");
  if (beta == 0.0) return dist;  // bit-identity

  std::map<std::string, int> vocab_index;
  for (size_t i = 0; i < intent_vocab.size(); ++i) {
    vocab_index[intent_vocab[i]] = static_cast<int>(i);
  }

  std::vector<double> weight(dist.size(), 0.0);
  std::map<int, RuleExplanation> best_chain;
  int used = 0;
  for (auto it = recent_intents.rbegin(); it != recent_intents.rend() && used < window; ++it) {
    NodeId node = graph.find_by_label(NodeKind::Intent, *it);
    ++used;
    if (node == kNoNode) continue;
    for (const auto& path : graph.consequent_chains(node, max_depth)) {
      double conf = 1.0;
      for (size_t i = 0; i + 1 < path.size(); ++i) {
        for (const Edge* e : graph.out_edges(path[i], EdgeKind::Consequent)) {
          if (e->dst == path[i + 1]) {
            conf *= e->confidence;
            break;
          }
        }
      }
      const std::string& target = graph.node(path.back()).label;
      auto vit = vocab_index.find(target);
      if (vit == vocab_index.end()) continue;
      int idx = vit->second;
      if (conf > weight[idx]) {
        weight[idx] = conf;
        RuleExplanation ex;
        for (NodeId n : path) ex.chain.push_back(graph.node(n).label);
        ex.confidence = conf;
        ex.target = target;
        best_chain[idx] = std::move(ex);
      }
    }
  }

  bool any = false;
  for (double w : weight) {
    if (w > 0.0) {
      any = true;
      break;
    }
  }
  if (!any) return dist;

  std::vector<double> boosted(dist.size());
  double sum = 0.0;
  for (size_t i = 0; i < dist.size(); ++i) {
    boosted[i] = dist[i] * (1.0 + beta * weight[i]);
    sum += boosted[i];
  }
  if (sum > 0.0) {
    for (double& v : boosted) v /= sum;
  }
  if (explanations) {
    for (auto& [idx, ex] : best_chain) explanations->push_back(ex);
    std::sort(explanations->begin(), explanations->end(),
              [](const RuleExplanation& a, const RuleExplanation& b) {
                if (a.confidence != b.confidence) return a.confidence > b.confidence;
                return a.target < b.target;
              });
  }
  return boosted;
}

std::vector<UserEvent> map_unknown_intents(const PredictorModel& model,
                                           const std::vector<UserEvent>& events) {
  std::vector<UserEvent> out = events;
  for (UserEvent& e : out) {
    try {
      model.intent_index(e.intent);
    } catch (const LookupError&) {
      e.intent = "<unk>";
    }
  }
  return out;
}

PredictionResult predict_top_k(const PredictorModel& model, const std::vector<UserEvent>& context,
                               int k, const ConceptGraph& graph, double beta,
                               const std::vector<QuerySlot>& future) {
  PredictionResult r = predict(model, context, 1, future);
  std::vector<std::string> recent;
  for (const UserEvent& e : context) recent.push_back(e.intent);

  std::vector<RuleExplanation> explanations;
  for (auto& step : r.step_probs) {
    std::vector<RuleExplanation>* exp_out = explanations.empty() ? &explanations : nullptr;
    step = apply_rules(step, recent, graph, beta, model.intent_vocab, exp_out);
  }
  r.explanations = std::move(explanations);

  std::vector<int> order(r.step_probs[0].size());
  for (size_t j = 0; j < order.size(); ++j) order[j] = static_cast<int>(j);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (r.step_probs[0][a] != r.step_probs[0][b]) {
      return r.step_probs[0][a] > r.step_probs[0][b];
    }
    return model.intent_vocab[a] < model.intent_vocab[b];
  });
  r.top_k.clear();
  for (int j : order) {
    if (static_cast<int>(r.top_k.size()) >= k) break;
    r.top_k.emplace_back(model.intent_vocab[j], r.step_probs[0][j]);
  }
  return r;
}

namespace {

std::vector<BuiltExample> build_training_windows(const PredictorModel& model,
                                                 const std::vector<Session>& sessions) {
  const PredictorConfig& cfg = model.config;
  std::vector<BuiltExample> windows;
  for (const Session& s : sessions) {
    const int n = static_cast<int>(s.events.size());
    std::vector<std::vector<int>> all_idx(n);
    for (int i = 0; i < n; ++i) {
      const UserEvent& e = s.events[i];
      all_idx[i] = token_indices(model.intent_index(e.intent),
                                 model.location_index(e.location), e.ts);
    }
    for (int t = 1; t < n; ++t) {
      BuiltExample ex;
      int lo = std::max(0, t - cfg.context);
      for (int i = lo; i < t; ++i) ex.enc_idx.push_back(all_idx[i]);
      int enc_len = static_cast<int>(ex.enc_idx.size());
      int ctx_len = std::min(cfg.context / 2, enc_len);
      for (int i = enc_len - ctx_len; i < enc_len; ++i) ex.dec_idx.push_back(ex.enc_idx[i]);
      ex.slot_begin = ctx_len;
      int n_slots = std::min(cfg.horizon, n - t);
      for (int k = 0; k < n_slots; ++k) {
        const UserEvent& target = s.events[t + k];
        std::vector<int> slot = token_indices(-1, all_idx[t + k][1], target.ts);
        ex.dec_idx.push_back(slot);
        ex.targets.push_back(all_idx[t + k][0]);
      }
      windows.push_back(std::move(ex));
    }
  }
  return windows;
}

struct AdamState {
  std::vector<Mat> m, v;
  int t = 0;
};

void adam_step(PredictorModel& model, const std::vector<Var>& flat, const Tape& tape,
               AdamState& st, double lr, double weight_decay) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  st.t += 1;
  double bc1 = 1.0 - std::pow(b1, st.t);
  double bc2 = 1.0 - std::pow(b2, st.t);
  size_t idx = 0;
  model.for_each_param([&](const std::string&, Mat& param) {
    const Mat& g = tape.grad(flat[idx]);
    Mat& m = st.m[idx];
    Mat& v = st.v[idx];
    for (size_t i = 0; i < param.size(); ++i) {
      double gi = g.data()[i];
      m.data()[i] = b1 * m.data()[i] + (1.0 - b1) * gi;
      v.data()[i] = b2 * v.data()[i] + (1.0 - b2) * gi * gi;
      double mhat = m.data()[i] / bc1;
      double vhat = v.data()[i] / bc2;
      param.data()[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * param.data()[i]);
    }
    ++idx;
  });
}

}  // namespace

PredictorModel train_predictor(const std::vector<Session>& sessions,
                               const PredictorConfig& config,
                               const IntentEmbeddingTable* kg_table, const ConceptGraph* graph) {
  config.check();
  std::set<std::string> intents, locations;
  for (const Session& s : sessions) {
    for (const UserEvent& e : s.events) {
      if (!e.labeled()) {
        throw std::invalid_argument("train_predictor: unlabeled event for user " + e.user);
      }
      intents.insert(e.intent);
      if (!e.location.empty()) locations.insert(e.location);
    }
  }
  if (intents.empty()) throw std::invalid_argument("train_predictor: no sessions");

  std::vector<std::string> intent_vocab{"<unk>"};
  intent_vocab.insert(intent_vocab.end(), intents.begin(), intents.end());
  std::vector<std::string> location_vocab{"<unk>"};
  location_vocab.insert(location_vocab.end(), locations.begin(), locations.end());

  PredictorModel model =
      init_predictor(config, intent_vocab, location_vocab, kg_table, graph);

  std::vector<BuiltExample> windows = build_training_windows(model, sessions);
  if (windows.empty()) throw std::invalid_argument("train_predictor: no training windows");

  AdamState adam;
  model.for_each_param([&](const std::string&, Mat& p) {
    adam.m.emplace_back(p.rows(), p.cols());
    adam.v.emplace_back(p.rows(), p.cols());
  });

  Rng rng(config.seed ^ 0xda7a5e7ULL);
  std::vector<size_t> perm(windows.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;

  const int batch = std::max(1, config.batch);
  const size_t per_epoch = config.windows_per_epoch > 0
                               ? std::min(perm.size(), size_t(config.windows_per_epoch))
                               : perm.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(perm);
    double epoch_loss = 0.0;
    double epoch_slots = 0.0;
    for (size_t start = 0; start < per_epoch; start += batch) {
      size_t end = std::min(per_epoch, start + batch);
      Tape tape;
      ModelVars mv = make_vars(tape, model);
      std::vector<Var> losses;
      int slots = 0;
      for (size_t w = start; w < end; ++w) {
        const BuiltExample& ex = windows[perm[w]];
        Var logits = forward_logits(tape, mv, config, ex, nullptr);
        losses.push_back(tape.cross_entropy_rows(logits, ex.targets));
        slots += static_cast<int>(ex.targets.size());
      }
      Var loss = tape.add_scalars(losses, 1.0 / std::max(1, slots));
      tape.backward(loss);
      adam_step(model, mv.flat, tape, adam, config.learning_rate, config.weight_decay);
      epoch_loss += tape.value(loss).at(0, 0) * slots;
      epoch_slots += slots;
    }
    model.train_curve.push_back(epoch_loss / epoch_slots);
  }
  return model;
}

double predictor_gradient_check(PredictorModel& model, const std::vector<Session>& sessions,
                                double epsilon) {
  std::vector<BuiltExample> windows = build_training_windows(model, sessions);
  if (windows.empty()) throw std::invalid_argument("gradient_check: no windows");

  int total_slots = 0;
  for (const auto& w : windows) total_slots += static_cast<int>(w.targets.size());

  auto eval_loss = [&]() {
    Tape tape;
    ModelVars mv = make_vars(tape, model);
    std::vector<Var> losses;
    for (const BuiltExample& ex : windows) {
      losses.push_back(
          tape.cross_entropy_rows(forward_logits(tape, mv, model.config, ex, nullptr), ex.targets));
    }
    return tape.value(tape.add_scalars(losses, 1.0 / total_slots)).at(0, 0);
  };

  // analytic pass
  Tape tape;
  ModelVars mv = make_vars(tape, model);
  std::vector<Var> losses;
  for (const BuiltExample& ex : windows) {
    losses.push_back(
        tape.cross_entropy_rows(forward_logits(tape, mv, model.config, ex, nullptr), ex.targets));
  }
  Var loss = tape.add_scalars(losses, 1.0 / total_slots);
  tape.backward(loss);

  auto rel_err = [](double analytic, double numeric) {
    if (std::fabs(analytic) < 1e-10 && std::fabs(numeric) < 1e-10) return 0.0;
    return std::fabs(analytic - numeric) /
           std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  };

  double max_err = 0.0;
  size_t pidx = 0;
  model.for_each_param([&](const std::string&, Mat& param) {
    const Mat& g = tape.grad(mv.flat[pidx]);
    for (size_t i = 0; i < param.size(); ++i) {
      double saved = param.data()[i];
      param.data()[i] = saved + epsilon;
      double up = eval_loss();
      param.data()[i] = saved - epsilon;
      double down = eval_loss();
      param.data()[i] = saved;
      double numeric = (up - down) / (2.0 * epsilon);
      max_err = std::max(max_err, rel_err(g.data()[i], numeric));
    }
    ++pidx;
  });
  return max_err;
}

std::string serialize_predictor(const PredictorModel& model) {
  std::ostringstream os;
  json meta;
  meta["t"] = "meta";
  meta["version"] = 1;
  meta["kind"] = "predictor";
  meta["dim"] = model.config.dim;
  meta["heads"] = model.config.heads;
  meta["enc_layers"] = model.config.enc_layers;
  meta["dec_layers"] = model.config.dec_layers;
  meta["ffn_mult"] = model.config.ffn_mult;
  meta["context"] = model.config.context;
  meta["horizon"] = model.config.horizon;
  meta["fuse_kg"] = model.config.fuse_kg;
  meta["seed"] = model.config.seed;
  meta["learning_rate"] = model.config.learning_rate;
  meta["weight_decay"] = model.config.weight_decay;
  meta["windows_per_epoch"] = model.config.windows_per_epoch;
  meta["epochs"] = model.config.epochs;
  meta["batch"] = model.config.batch;
  meta["intent_vocab"] = model.intent_vocab;
  meta["location_vocab"] = model.location_vocab;
  meta["train_curve"] = model.train_curve;
  os << meta.dump() << "\n";
  model.for_each_param_const([&](const std::string& name, const Mat& m) {
    json j;
    j["t"] = "mat";
    j["name"] = name;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = m.data();
    os << j.dump() << "\n";
  });
  return os.str();
}

PredictorModel parse_predictor(const std::string& content) {
  std::istringstream is(content);
  std::string line;
  size_t line_no = 0;
  PredictorModel model;
  bool have_meta = false;
  std::map<std::string, Mat*> slots;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad predictor record: ") + e.what(), line_no);
    }
    std::string t = j.value("t", "");
    if (t == "meta") {
      if (j.value("version", 0) != 1) throw ParseError("unsupported predictor version", line_no);
      model.config.dim = j.at("dim").get<int>();
      model.config.heads = j.at("heads").get<int>();
      model.config.enc_layers = j.at("enc_layers").get<int>();
      model.config.dec_layers = j.at("dec_layers").get<int>();
      model.config.ffn_mult = j.value("ffn_mult", 2);
      model.config.context = j.at("context").get<int>();
      model.config.horizon = j.at("horizon").get<int>();
      model.config.fuse_kg = j.value("fuse_kg", false);
      model.config.seed = j.value("seed", 0ULL);
      model.config.learning_rate = j.value("learning_rate", 2e-3);
      model.config.weight_decay = j.value("weight_decay", 0.01);
      model.config.windows_per_epoch = j.value("windows_per_epoch", 6000);
      model.config.epochs = j.value("epochs", 8);
      model.config.batch = j.value("batch", 32);
      model.intent_vocab = j.at("intent_vocab").get<std::vector<std::string>>();
      model.location_vocab = j.at("location_vocab").get<std::vector<std::string>>();
      model.train_curve = j.value("train_curve", std::vector<double>{});
      allocate_params(model);
      model.for_each_param([&](const std::string& name, Mat& m) { slots[name] = &m; });
      have_meta = true;
    } else if (t == "mat") {
      if (!have_meta) throw ParseError("mat record before meta", line_no);
      std::string name = j.at("name").get<std::string>();
      auto it = slots.find(name);
      if (it == slots.end()) throw ParseError("unknown parameter '" + name + "'", line_no);
      int rows = j.at("rows").get<int>();
      int cols = j.at("cols").get<int>();
      if (rows != it->second->rows() || cols != it->second->cols()) {
        throw ParseError("shape mismatch for parameter '" + name + "'", line_no);
      }
      std::vector<double> data = j.at("data").get<std::vector<double>>();
      if (data.size() != it->second->size()) {
        throw ParseError("data length mismatch for '" + name + "'", line_no);
      }
      it->second->data() = std::move(data);
      slots.erase(it);
    } else {
      throw ParseError("unknown predictor record '" + t + "'", line_no);
    }
  }
  if (!have_meta) throw ParseError("missing predictor meta record", 1);
  if (!slots.empty()) {
    throw ParseError("missing parameter '" + slots.begin()->first + "'", line_no + 1);
  }
  return model;
}

void save_predictor(const PredictorModel& model, const std::string& path) {
  write_text_file(path, serialize_predictor(model));
}

PredictorModel load_predictor(const std::string& path) {
  return parse_predictor(read_text_file(path));
}

}  // namespace intentkg
