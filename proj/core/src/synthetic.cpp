#include "wcl/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "wcl/error.hpp"
#include "wcl/utf8.hpp"

namespace wcl {

namespace {

struct Inventory {
  const char* consonants;
  const char* vowels;
};

constexpr Inventory kStyles[] = {
    {"ptkbdg", "aiu"},
    {"mnlrsv", "eoy"},
    {"fhjwzc", "aeo"},
    {"qxgtnk", "iu"},
};

std::size_t draw(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

std::vector<std::string> make_words(std::size_t count, std::size_t style, std::uint64_t seed) {
  const Inventory& inv = kStyles[style % std::size(kStyles)];
  const std::string cons = inv.consonants, vows = inv.vowels;
  std::mt19937_64 rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (++attempts > 100000 + 100 * count) throw ConfigError("cannot generate that many distinct words");
    const std::size_t syllables = 2 + draw(rng, 2);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += cons[draw(rng, cons.size())];
      w += vows[draw(rng, vows.size())];
    }
    // Styles past the inventory count get a suffix to stay disjoint.
    if (style >= std::size(kStyles)) w += std::to_string(style);
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

std::map<std::string, std::string> Dictionary::forward() const {
  std::map<std::string, std::string> m;
  for (std::size_t i = 0; i < src.size(); ++i) m[src[i]] = tgt[i];
  return m;
}

SyntheticCorpus generate_corpus(const Dictionary& dict, const std::string& src_lang, const std::string& tgt_lang,
                                const SyntheticOptions& options) {
  if (dict.src.size() != dict.tgt.size() || dict.src.empty()) throw ConfigError("dictionary must be a nonempty bijection");
  if (options.min_len == 0 || options.min_len > options.max_len || options.max_len > dict.src.size()) {
    throw ConfigError("invalid sentence length range");
  }
  std::mt19937_64 rng(options.seed);
  SyntheticCorpus c;
  c.bitext.src_lang = src_lang;
  c.bitext.tgt_lang = tgt_lang;
  std::vector<std::size_t> ids(dict.src.size());
  for (std::size_t k = 0; k < options.pairs; ++k) {
    const std::size_t len = options.min_len + draw(rng, options.max_len - options.min_len + 1);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    // Partial Fisher-Yates: the first `len` entries are a uniform sample.
    for (std::size_t i = 0; i < len; ++i) std::swap(ids[i], ids[i + draw(rng, ids.size() - i)]);
    std::vector<std::string> src, tgt;
    Links gold;
    for (std::size_t i = 0; i < len; ++i) {
      src.push_back(dict.src[ids[i]]);
      tgt.push_back(dict.tgt[ids[i]]);
    }
    if (options.order == WordOrder::kReversed) std::reverse(tgt.begin(), tgt.end());
    for (std::size_t i = 0; i < len; ++i) {
      gold.push_back({i, options.order == WordOrder::kReversed ? len - 1 - i : i});
    }
    std::sort(gold.begin(), gold.end());
    c.bitext.src_lines.push_back(join(src));
    c.bitext.tgt_lines.push_back(join(tgt));
    c.gold.push_back(std::move(gold));
  }
  return c;
}

}  // namespace wcl
