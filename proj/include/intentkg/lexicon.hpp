#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>

namespace intentkg {

// Ground dictionary backing node mining: function surface forms (verbs),
// products with their sememe tags, and stopwords. Surfaces are stored
// canonicalized; function and product sets must be disjoint.
struct Lexicon {
  std::set<std::string> functions;
  std::map<std::string, std::set<std::string>> products;  // product -> sememes
  std::set<std::string> stopwords;

  bool empty() const { return functions.empty() && products.empty(); }
  void check() const;  // throws ConfigError on overlap
};

Lexicon load_lexicon(const std::string& path);
Lexicon parse_lexicon(const std::string& json_text);
std::string serialize_lexicon(const Lexicon& lex);

// Exact lookup after canonicalization; unknown product -> empty set.
std::set<std::string> assign_sememes(std::string_view product, const Lexicon& lexicon);

}  // namespace intentkg
