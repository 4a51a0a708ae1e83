#include "intentkg/lexicon.hpp"

#include <json.hpp>

#include "intentkg/errors.hpp"
#include "intentkg/util.hpp"

namespace intentkg {

using nlohmann::json;

void Lexicon::check() const {
  for (const auto& [p, _] : products) {
    if (functions.count(p)) {
      throw ConfigError("lexicon: '" + p + "' is both a function and a product");
    }
  }
}

Lexicon parse_lexicon(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("lexicon: bad json: ") + e.what());
  }
  Lexicon lex;
  for (const auto& f : j.value("functions", json::array())) {
    lex.functions.insert(canonical_label(f.get<std::string>()));
  }
  json products = j.value("products", json::object());
  for (const auto& [product, sememes] : products.items()) {
    std::set<std::string>& out = lex.products[canonical_label(product)];
    for (const auto& s : sememes) out.insert(s.get<std::string>());
  }
  for (const auto& s : j.value("stopwords", json::array())) {
    lex.stopwords.insert(canonical_label(s.get<std::string>()));
  }
  lex.check();
  return lex;
}

Lexicon load_lexicon(const std::string& path) {
  return parse_lexicon(read_text_file(path));
}

std::string serialize_lexicon(const Lexicon& lex) {
  json j;
  j["functions"] = lex.functions;
  json products = json::object();
  for (const auto& [p, sems] : lex.products) products[p] = sems;
  j["products"] = products;
  j["stopwords"] = lex.stopwords;
  return j.dump(2) + "\n";
}

std::set<std::string> assign_sememes(std::string_view product, const Lexicon& lexicon) {
  auto it = lexicon.products.find(canonical_label(product));
  if (it == lexicon.products.end()) return {};
  return it->second;
}

}  // namespace intentkg
