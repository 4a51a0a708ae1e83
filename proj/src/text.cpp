#include "intentkg/text.hpp"

#include <cmath>
#include <stdexcept>

#include "intentkg/util.hpp"

namespace intentkg {

TextEncoder::TextEncoder(TextEncoderConfig cfg) : cfg_(cfg) {
  if (cfg_.dim < 8) throw std::invalid_argument("TextEncoderConfig.dim must be >= 8");
  if (cfg_.ngram_min < 1 || cfg_.ngram_max < cfg_.ngram_min) {
    throw std::invalid_argument("TextEncoderConfig: bad ngram range");
  }
}

std::vector<std::string> utf8_units(std::string_view s) {
  std::vector<std::string> units;
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = s[i];
    size_t len = 1;
    if ((c & 0x80) == 0x00) len = 1;
    else if ((c & 0xe0) == 0xc0) len = 2;
    else if ((c & 0xf0) == 0xe0) len = 3;
    else if ((c & 0xf8) == 0xf0) len = 4;
    if (i + len > s.size()) len = 1;
    for (size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(s[i + k]) & 0xc0) != 0x80) {
        len = k;  // truncated sequence, treat prefix as one unit
        break;
      }
    }
    units.emplace_back(s.substr(i, len));
    i += len;
  }
  return units;
}

std::vector<double> TextEncoder::encode(std::string_view text) const {
  std::vector<double> v(cfg_.dim, 0.0);
  std::string canon = canonical_label(text);
  if (canon.empty()) return v;  // zero vector, not normalized

  std::vector<std::string> units = utf8_units(canon);
  const int n_units = static_cast<int>(units.size());
  for (int n = cfg_.ngram_min; n <= cfg_.ngram_max; ++n) {
    for (int start = 0; start + n <= n_units; ++start) {
      std::string gram;
      for (int k = 0; k < n; ++k) gram += units[start + k];
      uint64_t h = fnv1a64(gram.data(), gram.size(), cfg_.hash_seed ^ 0xcbf29ce484222325ULL);
      int bucket = static_cast<int>(h % static_cast<uint64_t>(cfg_.dim));
      double sign = (h >> 63) ? -1.0 : 1.0;
      v[bucket] += sign;
    }
  }
  if (cfg_.normalize) {
    double norm = l2_norm(v.data(), v.size());
    if (norm > 0.0) {
      for (double& x : v) x /= norm;
    }
  }
  return v;
}

Mat TextEncoder::encode_rows(const std::vector<std::string>& texts) const {
  Mat m(static_cast<int>(texts.size()), cfg_.dim);
  for (size_t i = 0; i < texts.size(); ++i) {
    std::vector<double> v = encode(texts[i]);
    for (int j = 0; j < cfg_.dim; ++j) m.at(static_cast<int>(i), j) = v[j];
  }
  return m;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine(a, b);
}

}  // namespace intentkg
