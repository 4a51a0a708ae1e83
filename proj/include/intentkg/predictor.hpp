#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "intentkg/autograd.hpp"
#include "intentkg/events.hpp"
#include "intentkg/gcn.hpp"
#include "intentkg/graph.hpp"
#include "intentkg/matrix.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

struct PredictorConfig {
  int dim = 64;  // must be divisible by heads
  int heads = 4;
  int enc_layers = 2;
  int dec_layers = 1;
  int ffn_mult = 2;
  int context = 32;  // L
  int horizon = 4;   // H
  bool fuse_kg = false;
  uint64_t seed = 7;
  // training
  double learning_rate = 2e-3;
  double weight_decay = 0.01;  // decoupled, applied with the Adam step
  int epochs = 8;
  int batch = 32;
  int windows_per_epoch = 6000;  // seeded subsample; 0 = use every window

  void check() const;
};

struct LayerNormParams {
  Mat gain, bias;  // 1 x d
};

struct AttentionParams {
  Mat wq, wk, wv, wo;  // d x d
};

struct FfnParams {
  Mat w1, b1, w2, b2;
};

struct EncoderLayerParams {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  FfnParams ffn;
};

struct DecoderLayerParams {
  LayerNormParams ln1, ln2, ln3;
  AttentionParams self_attn, cross_attn;
  FfnParams ffn;
};

// Encoder-decoder next-intent model. The decoder sees recent context tokens
// followed by zero-padded query slots (location/time embeddings only) and
// emits all horizon distributions in one pass.
struct PredictorModel {
  PredictorConfig config;
  std::vector<std::string> intent_vocab;    // index 0 = "<unk>"
  std::vector<std::string> location_vocab;  // index 0 = "<unk>"
  Mat intent_embed, loc_embed, minute_embed, hour_embed, wday_embed, month_embed;
  std::vector<EncoderLayerParams> encoder;
  std::vector<DecoderLayerParams> decoder;
  LayerNormParams enc_ln, dec_ln;
  Mat out_proj;  // d x |intent_vocab|
  Mat out_bias;  // 1 x |intent_vocab|
  std::vector<double> train_curve;  // mean loss per epoch

  int intent_index(const std::string& key) const;    // throws LookupError
  int location_index(const std::string& key) const;  // <unk> fallback
  // Visits every parameter matrix in a fixed order.
  void for_each_param(const std::function<void(const std::string&, Mat&)>& fn);
  void for_each_param_const(const std::function<void(const std::string&, const Mat&)>& fn) const;
  uint64_t fingerprint() const;
};

PredictorModel init_predictor(const PredictorConfig& config,
                              const std::vector<std::string>& intent_vocab,
                              const std::vector<std::string>& location_vocab,
                              const IntentEmbeddingTable* kg_table = nullptr,
                              const ConceptGraph* graph = nullptr);

// Sum of intent/location/calendar embeddings for one event; exposed for
// tests. Index validity is enforced here, UNK mapping is the caller's job.
std::vector<double> encode_event(const PredictorModel& model, int intent_idx, int location_idx,
                                 int64_t timestamp);

struct QuerySlot {
  int64_t ts = 0;
  std::string location;  // empty = reuse last observed
};

struct RuleExplanation {
  std::vector<std::string> chain;  // intent labels along the consequent path
  double confidence = 0.0;         // product of edge confidences
  std::string target;              // boosted intent
};

struct PredictionResult {
  std::vector<std::vector<double>> step_probs;       // horizon x |vocab|
  std::vector<std::pair<std::string, double>> top_k; // from the first step
  std::vector<RuleExplanation> explanations;
};

// One forward pass; distributions are softmax-normalized per horizon step.
// Attention rows can be captured for inspection via `attention_probe`.
PredictionResult predict(const PredictorModel& model, const std::vector<UserEvent>& context,
                         int horizon, const std::vector<QuerySlot>& future = {},
                         std::vector<Mat>* attention_probe = nullptr);

// Multiplicative rule boost: intents reachable from the last `window`
// observed intents via Consequent chains (depth <= 2) get
// p' = p * (1 + beta * chain-confidence); renormalized. beta = 0 returns the
// input bit-identically.
std::vector<double> apply_rules(const std::vector<double>& dist,
                                const std::vector<std::string>& recent_intents,
                                const ConceptGraph& graph, double beta,
                                const std::vector<std::string>& intent_vocab,
                                std::vector<RuleExplanation>* explanations = nullptr,
                                int window = 3, int max_depth = 2);

PredictionResult predict_top_k(const PredictorModel& model, const std::vector<UserEvent>& context,
                               int k, const ConceptGraph& graph, double beta,
                               const std::vector<QuerySlot>& future = {});

// Copy of the events with intents missing from the model's vocabulary
// replaced by "<unk>" (evaluation-side data prep; predict itself is strict).
std::vector<UserEvent> map_unknown_intents(const PredictorModel& model,
                                           const std::vector<UserEvent>& events);

// Teacher-forced training over in-session windows. Vocabulary is built from
// the sessions; when kg_table is given and config.fuse_kg is set, intent
// embedding rows are initialized from the table (via the graph's labels).
PredictorModel train_predictor(const std::vector<Session>& sessions, const PredictorConfig& config,
                               const IntentEmbeddingTable* kg_table = nullptr,
                               const ConceptGraph* graph = nullptr);

// Max relative error of tape gradients vs central differences on the given
// sessions (use a micro config; cost is O(#params) forward passes).
double predictor_gradient_check(PredictorModel& model, const std::vector<Session>& sessions,
                                double epsilon);

std::string serialize_predictor(const PredictorModel& model);
PredictorModel parse_predictor(const std::string& content);
void save_predictor(const PredictorModel& model, const std::string& path);
PredictorModel load_predictor(const std::string& path);

}  // namespace intentkg
