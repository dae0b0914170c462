#pragma once

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace wcl {

// A single word-to-word link, 0-based indices.
struct AlignmentLink {
  std::size_t src = 0;
  std::size_t tgt = 0;
  auto operator<=>(const AlignmentLink&) const = default;
};

using Links = std::vector<AlignmentLink>;

// Half-open range of word indices [begin, end).
struct WordRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  auto operator<=>(const WordRange&) const = default;
};

// Aligned source/target word ranges. One-word pairs come from the aligner
// or lexicon lookup; merged phrases cover several words per side.
struct WordPair {
  WordRange src;
  WordRange tgt;
  auto operator<=>(const WordPair&) const = default;
};

std::vector<WordPair> to_word_pairs(const Links& links);

// Alignments of a whole batch: entry k says that words `pair.src` of the
// source sentence `sentence` align to words `pair.tgt` of its target.
struct AlignmentEntry {
  std::size_t sentence = 0;
  WordPair pair;
};

struct AlignmentSet {
  std::vector<AlignmentEntry> entries;
  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

// Pharaoh format: one line per sentence, space separated `i-j` tokens.
std::string format_pharaoh(const Links& links);
Links parse_pharaoh_line(std::string_view line, std::size_t line_no);
void write_pharaoh(std::ostream& out, const std::vector<Links>& sentences);
std::vector<Links> read_pharaoh(std::istream& in);

// Range extension used for lexicon word pairs: `i:i'-j:j'` with half-open
// ranges. Single-word pairs are written as plain `i-j` so that 1-word
// output stays readable by ordinary Pharaoh tools.
std::string format_word_pairs(const std::vector<WordPair>& pairs);
std::vector<WordPair> parse_word_pairs_line(std::string_view line, std::size_t line_no);
void write_word_pairs(std::ostream& out, const std::vector<std::vector<WordPair>>& sentences);
std::vector<std::vector<WordPair>> read_word_pairs(std::istream& in);

}  // namespace wcl
