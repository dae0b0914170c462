#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "wcl/alignment.hpp"
#include "wcl/corpus.hpp"

namespace wcl {

// `count` distinct pseudo-words built from syllables. Each style uses its own
// consonant and vowel inventory, so words of different styles never collide.
std::vector<std::string> make_words(std::size_t count, std::size_t style, std::uint64_t seed);

// Bijection src[i] <-> tgt[i].
struct Dictionary {
  std::vector<std::string> src;
  std::vector<std::string> tgt;

  std::map<std::string, std::string> forward() const;
};

enum class WordOrder { kMonotone, kReversed };

struct SyntheticCorpus {
  RawBitext bitext;
  std::vector<Links> gold;
};

struct SyntheticOptions {
  std::size_t pairs = 200;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  WordOrder order = WordOrder::kMonotone;
  std::uint64_t seed = 1;
};

// Sentences of distinct source words drawn uniformly from the dictionary and
// translated word by word, kept in order or reversed.
SyntheticCorpus generate_corpus(const Dictionary& dict, const std::string& src_lang, const std::string& tgt_lang,
                                const SyntheticOptions& options);

}  // namespace wcl
