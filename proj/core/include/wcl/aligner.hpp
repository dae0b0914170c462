#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "wcl/alignment.hpp"
#include "wcl/corpus.hpp"

namespace wcl {

// Word-level sentence pair as seen by the aligner.
struct WordSentencePair {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
};

std::vector<WordSentencePair> word_pairs_of(std::span<const SentencePair> pairs);
std::vector<WordSentencePair> word_pairs_of(const RawBitext& bitext);

struct AlignerOptions {
  std::size_t iterations = 5;
  double p0 = 0.08;       // null-alignment probability
  double lambda = 4.0;    // diagonal tension
  std::size_t shards = 8;   // fixed E-step partition; results do not depend on `threads`
  std::size_t threads = 1;
};

inline constexpr std::string_view kNullWord = "<null>";
inline constexpr double kOovFloor = 1e-9;

// Lexical translation probabilities theta(tgt | src) of the diagonal-prior
// IBM Model 2 variant, with the null source word at source id 0.
class TranslationTable {
 public:
  TranslationTable() = default;
  TranslationTable(double p0, double lambda);

  double p0() const { return p0_; }
  double lambda() const { return lambda_; }

  // 0 when the pair was never observed.
  double prob(std::string_view tgt, std::string_view src) const;
  double null_prob(std::string_view tgt) const { return prob(tgt, kNullWord); }
  double row_sum(std::string_view src) const;
  std::vector<std::string> sources() const;

  // Alignment prior for target position j (0-based) of m words over source
  // position i (0-based) of n words, excluding the null share.
  double diagonal_prior(std::size_t i, std::size_t j, std::size_t n, std::size_t m) const;

  void write_tsv(std::ostream& out) const;
  static TranslationTable read_tsv(std::istream& in, double p0, double lambda);

 private:
  friend class EmTrainer;
  int src_id(std::string_view w) const;
  int tgt_id(std::string_view w) const;

  double p0_ = 0.08;
  double lambda_ = 4.0;
  std::unordered_map<std::string, int> src_ids_;
  std::unordered_map<std::string, int> tgt_ids_;
  std::vector<std::string> src_words_;
  std::vector<std::string> tgt_words_;
  std::vector<std::unordered_map<int, double>> theta_;
};

struct EmResult {
  TranslationTable table;
  // Observed-data log-likelihood of the corpus under the initial table and
  // after each iteration: iterations + 1 values.
  std::vector<double> log_likelihood;
};

EmResult em_train(std::span<const WordSentencePair> corpus, const AlignerOptions& options);

// Per target word: argmax over null and source positions of prior x theta,
// ties to the smaller index with null ranked first. Null winners yield no link.
Links viterbi(const WordSentencePair& pair, const TranslationTable& table);

// Drops every link that shares its source or its target index with another link.
Links filter_one_to_one(const Links& links);

bool is_one_to_one(const Links& links);

// Links present in both `forward` and the transposed `backward`.
Links intersect(const Links& forward, const Links& backward);

enum class Symmetrize { kNone, kIntersection };

struct AlignmentRun {
  std::vector<Links> links;  // one per input pair, after 1-to-1 filtering
  EmResult forward;
  std::vector<double> backward_log_likelihood;
};

// EM training on `training` (the extra bitext included), then Viterbi and
// 1-to-1 filtering on `targets`.
AlignmentRun align_corpus(std::span<const WordSentencePair> training, std::span<const WordSentencePair> targets,
                          const AlignerOptions& options, Symmetrize symmetrize = Symmetrize::kNone);

}  // namespace wcl
