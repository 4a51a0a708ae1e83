#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

namespace intentkg {

// SplitMix64. Used everywhere seeds matter so results do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1).
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  // Uniform in [lo, hi].
  int64_t next_range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Box-Muller, one value per call (the pair's second half is discarded to
  // keep consumption order independent of call parity).
  double next_normal();

  // Sample index from unnormalized non-negative weights.
  size_t next_weighted(const std::vector<double>& weights);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

uint64_t fnv1a64(std::string_view bytes);
uint64_t fnv1a64(const void* data, size_t n, uint64_t seed);
std::string hex64(uint64_t v);

// trim + ASCII case-fold + internal whitespace collapsed to single spaces.
// Non-ASCII bytes pass through untouched.
std::string canonical_label(std::string_view s);

// Whitespace tokenizer that records byte offsets into the original text.
struct Token {
  std::string text;   // case-folded
  size_t begin = 0;   // byte offset in source
  size_t end = 0;
};
std::vector<Token> tokenize(std::string_view text);

// Calendar fields derived from epoch seconds in UTC. weekday: Monday = 0.
struct GlobalTime {
  int minute = 0;   // [0,59]
  int hour = 0;     // [0,23]
  int weekday = 0;  // [0,6]
  int month = 1;    // [1,12]
};
GlobalTime global_time_utc(int64_t epoch_seconds);

std::vector<std::string> read_lines(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Shortest decimal form that round-trips a double bit-exactly.
std::string format_double(double v);

}  // namespace intentkg
