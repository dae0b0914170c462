#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcl/corpus.hpp"
#include "wcl/model.hpp"

namespace wcl {

using Tokens = std::vector<std::string>;

struct BleuReport {
  double score = 0;  // percent
  std::array<double, 4> precisions{};
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  double brevity_penalty = 0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Corpus BLEU over clipped 1..4-gram counts. A zero precision is replaced by
// 1e-9 / total before the geometric mean. Throws ConfigError on an empty
// corpus or mismatched counts.
BleuReport bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);
BleuReport bleu_lines(const std::vector<std::string>& hyps, const std::vector<std::string>& refs);

struct BootstrapResult {
  double bleu_a = 0;
  double bleu_b = 0;
  double frac_a_not_better = 0;  // resamples with BLEU(A) <= BLEU(B)
  double frac_b_not_better = 0;
  double p_value = 1;  // two-sided
  std::size_t resamples = 0;

  nlohmann::json to_json() const;
};

// Paired bootstrap over sentence indices drawn with replacement.
BootstrapResult bootstrap_significance(const std::vector<Tokens>& hyp_a, const std::vector<Tokens>& hyp_b,
                                       const std::vector<Tokens>& refs, std::size_t resamples, std::uint64_t seed);

using Embeddings = std::vector<std::vector<double>>;

// Fraction of queries whose most cosine-similar candidate is the candidate
// with the same index. Ties go to the lowest candidate index.
double retrieval_p1(const Embeddings& queries, const Embeddings& candidates);

enum class RetrievalScope { kInBatch, kFull };
enum class Granularity { kSentence, kWord };

std::string to_string(RetrievalScope scope);
RetrievalScope parse_scope(const std::string& text);
std::string to_string(Granularity g);
Granularity parse_granularity(const std::string& text);

struct RetrievalEntry {
  std::string pair;
  double forward = 0;   // source queries against target candidates
  double backward = 0;
  double average = 0;
  std::size_t queries = 0;
};

struct RetrievalReport {
  Granularity granularity = Granularity::kSentence;
  RetrievalScope scope = RetrievalScope::kFull;
  std::vector<RetrievalEntry> entries;

  double mean() const;
  const RetrievalEntry* find(const std::string& pair) const;
  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Mean-pooled (unprojected) encoder states of each sentence's subwords,
// source and target sides.
struct PairedEmbeddings {
  Embeddings src;
  Embeddings tgt;
};

PairedEmbeddings sentence_embeddings(const Transformer& model, const Vocabulary& vocab,
                                     const std::vector<SentencePair>& pairs, std::size_t budget);

// Pooled states of every aligned word range, grouped by sequential
// batches of at most `batch_tokens` tokens.
std::vector<PairedEmbeddings> word_embeddings(const Transformer& model, const Vocabulary& vocab,
                                              const std::vector<SentencePair>& pairs, std::size_t batch_tokens);

// Both directions over the given groups; each direction is the mean P@1
// over nonempty groups.
RetrievalEntry retrieval_entry(const std::string& pair, const std::vector<PairedEmbeddings>& groups);

// Per language pair. kFull searches the whole pair; kInBatch searches
// within sequential batches of `budget` tokens.
RetrievalReport sentence_retrieval(const Transformer& model, const Vocabulary& vocab, const ParallelCorpus& valid,
                                   RetrievalScope scope, std::size_t budget);
RetrievalReport word_retrieval(const Transformer& model, const Vocabulary& vocab, const ParallelCorpus& valid,
                               std::size_t batch_tokens = 512);

// Throws UndefinedResult on zero variance and ConfigError on fewer than 2
// points or unequal lengths.
double pearson(std::span<const double> xs, std::span<const double> ys);
// Pearson over average ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

// Greedy translations of every pair's source, as words.
std::vector<Tokens> translate(const Transformer& model, const Vocabulary& vocab,
                              const std::vector<SentencePair>& pairs, std::size_t max_len);

}  // namespace wcl
