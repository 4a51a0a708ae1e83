#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "intentkg/matrix.hpp"

namespace intentkg {

struct TextEncoderConfig {
  int dim = 64;          // >= 8
  int ngram_min = 2;
  int ngram_max = 4;
  uint64_t hash_seed = 0x5eedULL;
  bool normalize = true;
};

// Deterministic hashed character n-gram encoder. Labels are canonicalized
// first; n-grams run over Unicode code points so CJK labels hash per
// character, not per byte. Each n-gram adds +/-1 to one bucket (sign from a
// hash bit), then the sum is L2-normalized unless the text was empty.
class TextEncoder {
 public:
  explicit TextEncoder(TextEncoderConfig cfg = {});

  std::vector<double> encode(std::string_view text) const;
  // Rows are encode() of each input, in order.
  Mat encode_rows(const std::vector<std::string>& texts) const;

  const TextEncoderConfig& config() const { return cfg_; }

 private:
  TextEncoderConfig cfg_;
};

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Splits UTF-8 into code point strings; invalid bytes become single-byte units.
std::vector<std::string> utf8_units(std::string_view s);

}  // namespace intentkg
