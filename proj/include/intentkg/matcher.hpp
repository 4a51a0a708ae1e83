#pragma once

#include <optional>
#include <string>
#include <vector>

#include "intentkg/gcn.hpp"
#include "intentkg/matrix.hpp"
#include "intentkg/text.hpp"

namespace intentkg {

enum class ItemKind : uint8_t { Query = 0, Service, Bill, Coupon, Store, Review };
std::string_view to_string(ItemKind k);
ItemKind item_kind_from_string(std::string_view s);

// A user-interacted content object. Image features, when present, are
// precomputed vectors concatenated after the text vector.
struct Item {
  std::string id;
  ItemKind kind = ItemKind::Query;
  std::string text;
  std::vector<double> image_vec;
};

enum class MatchLoss : uint8_t { Bce = 0, Asymmetric = 1 };

struct MatcherConfig {
  MatchLoss loss = MatchLoss::Bce;
  double gamma_pos = 0.0;  // asymmetric focusing, positive branch
  double gamma_neg = 2.0;  // asymmetric focusing, negative branch
  double learning_rate = 100.0;
  double momentum = 0.9;     // heavy-ball coefficient; 0 = plain descent
  double weight_decay = 0.0;  // decoupled per-epoch shrink of the projection
  int epochs = 1000;
  int image_dim = 0;  // fixed extra dims appended to the text vector
};

// Bilinear item-intent scorer: sigmoid(item' * projection * intent + bias).
struct MatcherParams {
  Mat projection;  // item_dim x intent_dim
  double bias = 0.0;
  MatcherConfig config;
  double final_loss = 0.0;
  std::vector<double> loss_curve;
};

// Text vector plus zero-padded/onto image slot, per config.image_dim.
std::vector<double> encode_item(const Item& item, const TextEncoder& encoder, int image_dim);

double score_item_intent(const std::vector<double>& item_vec, const std::vector<double>& intent_vec,
                         const MatcherParams& params);

struct LabeledItem {
  Item item;
  std::vector<NodeId> positives;  // intent node ids
};

// Full-batch gradient descent on the multi-label loss against the frozen
// intent embedding table. Deterministic; zero-initialized parameters.
MatcherParams train_matcher(const std::vector<LabeledItem>& dataset,
                            const IntentEmbeddingTable& table, const TextEncoder& encoder,
                            const MatcherConfig& config);

// Max relative error between analytic and central-difference gradients of
// the training loss at `params`.
double matcher_gradient_check(const MatcherParams& params, const std::vector<LabeledItem>& dataset,
                              const IntentEmbeddingTable& table, const TextEncoder& encoder,
                              double epsilon);

struct IntentScore {
  NodeId intent = kNoNode;
  double score = 0.0;
};

// Scores every intent, keeps those >= threshold, caps at top_k, ordered by
// (score desc, intent id asc).
std::vector<IntentScore> label_item(const Item& item, const IntentEmbeddingTable& table,
                                    const MatcherParams& params, const TextEncoder& encoder,
                                    int top_k, double threshold);

std::string serialize_matcher(const MatcherParams& params);
MatcherParams parse_matcher(const std::string& content);
void save_matcher(const MatcherParams& params, const std::string& path);
MatcherParams load_matcher(const std::string& path);

}  // namespace intentkg
