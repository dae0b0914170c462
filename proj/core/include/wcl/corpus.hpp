#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wcl/alignment.hpp"

namespace wcl {

using TokenId = std::int32_t;

inline constexpr std::string_view kEndOfWord = "</w>";

// Subword vocabulary with BPE merges. Special ids come first: PAD, BOS,
// EOS, UNK and then one tag per language (`<2xx>`); learned subwords
// follow and never share an id with a special.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;

  Vocabulary() = default;
  explicit Vocabulary(const std::vector<std::string>& languages);

  TokenId add_language(const std::string& lang);
  TokenId add_piece(const std::string& piece);

  std::size_t size() const { return pieces_.size(); }
  std::size_t num_special() const { return num_special_; }
  bool is_special(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < num_special_; }

  // Learned subword lookup; UNK when absent.
  TokenId piece_id(std::string_view piece) const;
  bool contains_piece(std::string_view piece) const;
  const std::string& piece(TokenId id) const;
  TokenId lang_tag(std::string_view lang) const;
  const std::vector<std::string>& languages() const { return languages_; }

  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  void set_merges(std::vector<std::pair<std::string, std::string>> merges);

  // BPE segmentation of a single word, boundary marker included. Results
  // are memoized, so concurrent calls on one instance are not safe.
  std::vector<TokenId> encode_word(std::string_view word) const;
  // Inverse of encode_word over a whole sentence; specials are skipped.
  std::vector<std::string> decode(const std::vector<TokenId>& ids) const;

  void write_tsv(std::ostream& out) const;
  static Vocabulary read_tsv(std::istream& in);
  void write_merges(std::ostream& out) const;
  void read_merges(std::istream& in);

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, TokenId> learned_;
  std::unordered_map<std::string, TokenId> tags_;
  std::vector<std::string> languages_;
  std::size_t num_special_ = 0;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> merge_rank_;
  mutable std::unordered_map<std::string, std::vector<TokenId>> cache_;
};

std::string language_tag_piece(std::string_view lang);

// Learns `merges` BPE merges over whitespace-split words. Ties go to the
// lexicographically smallest pair. Throws ConfigError on an empty corpus.
Vocabulary train_bpe(const std::vector<std::string>& lines, std::size_t merges,
                     const std::vector<std::string>& languages);

struct SentencePair {
  std::string src_lang;
  std::string tgt_lang;
  std::vector<std::string> src_words;
  std::vector<std::string> tgt_words;
  std::vector<TokenId> src_subwords;
  std::vector<TokenId> tgt_subwords;
  std::vector<WordRange> src_spans;  // per word, into src_subwords
  std::vector<WordRange> tgt_spans;
  std::vector<WordPair> alignment;   // word-level, may be empty
  std::size_t line = 0;              // 0-based line in its bitext

  std::size_t token_count() const { return src_subwords.size() + tgt_subwords.size(); }
  std::string lang_pair() const { return src_lang + "-" + tgt_lang; }
  SentencePair reversed() const;
};

// Spans are contiguous, nonempty and cover [0, subwords) exactly.
bool spans_partition(const std::vector<WordRange>& spans, std::size_t subwords);

// Returns nullopt when either side is empty after whitespace splitting.
std::optional<SentencePair> segment(std::string_view src_line, std::string_view tgt_line,
                                    const std::string& src_lang, const std::string& tgt_lang,
                                    const Vocabulary& vocab);

// `<prefix>.<src>` and `<prefix>.<tgt>`, written on the command line as
// `prefix:src:tgt`.
struct BitextSpec {
  std::string prefix;
  std::string src;
  std::string tgt;

  static BitextSpec parse(std::string_view text);
  std::string src_path() const { return prefix + "." + src; }
  std::string tgt_path() const { return prefix + "." + tgt; }
  std::string label() const { return src + "-" + tgt; }
};

struct RawBitext {
  std::string src_lang;
  std::string tgt_lang;
  std::vector<std::string> src_lines;
  std::vector<std::string> tgt_lines;
  std::size_t size() const { return src_lines.size(); }
};

RawBitext read_bitext(const BitextSpec& spec);
void write_bitext(const BitextSpec& spec, const RawBitext& bitext);

// Segmented sentence pairs grouped by language pair ("src-tgt").
struct ParallelCorpus {
  std::map<std::string, std::vector<SentencePair>> by_pair;
  std::size_t skipped = 0;

  std::size_t size() const;
  void add(SentencePair pair) { by_pair[pair.lang_pair()].push_back(std::move(pair)); }
};

// Segments a raw bitext. `alignments`, when given, must have one entry per
// line and is attached to the surviving pairs.
std::vector<SentencePair> segment_bitext(const RawBitext& bitext, const Vocabulary& vocab,
                                         const std::vector<std::vector<WordPair>>* alignments,
                                         std::size_t* skipped);

struct Batch {
  std::vector<SentencePair> pairs;
  AlignmentSet alignments;
  std::size_t token_count = 0;  // N_T: source + target subwords

  std::size_t size() const { return pairs.size(); }
};

Batch make_batch(std::vector<SentencePair> pairs);

// p_i proportional to size_i^(1/temperature), renormalized.
std::vector<double> sampling_probabilities(const std::vector<std::size_t>& sizes, double temperature);

struct BatchingOptions {
  std::size_t budget = 1024;
  double temperature = 1.5;
  std::uint64_t seed = 1;
};

// Endless deterministic stream of token-budgeted batches. Each epoch draws
// as many sentences as the corpus holds, picking the language pair by
// temperature sampling, then sorts by length, cuts the sorted list into
// batches under the budget and shuffles the batch order.
class BatchStream {
 public:
  BatchStream(const ParallelCorpus& corpus, BatchingOptions options);

  Batch next();
  std::size_t dropped() const { return dropped_; }
  std::size_t epoch() const { return epoch_; }
  const std::vector<std::string>& pair_names() const { return names_; }
  const std::vector<double>& probabilities() const { return probs_; }

 private:
  void refill();

  BatchingOptions options_;
  std::vector<std::string> names_;
  std::vector<std::vector<const SentencePair*>> pools_;
  std::vector<std::vector<std::size_t>> orders_;
  std::vector<std::size_t> cursors_;
  std::vector<double> probs_;
  std::mt19937_64 rng_;
  std::vector<std::vector<const SentencePair*>> queue_;
  std::size_t queue_pos_ = 0;
  std::size_t dropped_ = 0;
  std::size_t epoch_ = 0;
};

// Cuts pairs, in order, into consecutive groups whose token count stays
// within `budget`. Used for validation and probing.
std::vector<Batch> sequential_batches(const std::vector<SentencePair>& pairs, std::size_t budget);

}  // namespace wcl
