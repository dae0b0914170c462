#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wcl/aligner.hpp"
#include "wcl/alignment.hpp"

namespace wcl {

struct LexiconEntry {
  std::string tgt;
  double score = 0;
};

struct LexiconOptions {
  std::size_t top_k = 5;
  double alpha = 0.1;  // add-alpha smoothing of both conditionals
};

// Bilingual lexicon scored by p(tgt|src) * p(src|tgt) from sentence-level
// co-occurrence counts. Each list is sorted by descending score, ties by
// target string.
class Lexicon {
 public:
  const std::vector<LexiconEntry>* find(std::string_view src) const;
  const LexiconEntry* top1(std::string_view src) const;
  const std::map<std::string, std::vector<LexiconEntry>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  void set(std::string src, std::vector<LexiconEntry> ranked) { entries_[std::move(src)] = std::move(ranked); }

  void write_tsv(std::ostream& out) const;
  static Lexicon read_tsv(std::istream& in);

 private:
  std::map<std::string, std::vector<LexiconEntry>> entries_;
};

Lexicon build_lexicon(std::span<const WordSentencePair> corpus, const LexiconOptions& options);

// One-word pairs (i, j) where tgt[j] is the top-1 entry of src[i] with
// score >= threshold. Highest score wins conflicts, then the leftmost
// source and target position; every index is used at most once.
std::vector<WordPair> extract_pairs(const WordSentencePair& pair, const Lexicon& lexicon, double threshold = 0.0);

// Merges maximal runs of pairs that are adjacent on both sides into one
// phrase pair. Crossing or gapped pairs pass through.
std::vector<WordPair> merge_phrases(std::vector<WordPair> pairs);

// No two pairs are adjacent on both sides.
bool is_maximal(const std::vector<WordPair>& pairs);

double pairs_per_sentence(std::size_t total_pairs, std::size_t sentences);

}  // namespace wcl
