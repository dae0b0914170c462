#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcl/aligner.hpp"
#include "wcl/corpus.hpp"
#include "wcl/lexicon.hpp"

namespace wcl {

using SentenceAlignments = std::vector<std::vector<WordPair>>;

struct AlignedBitext {
  RawBitext bitext;
  SentenceAlignments alignments;  // empty, or one entry per line
};

// Sorted union of the languages of all bitexts.
std::vector<std::string> languages_of(const std::vector<RawBitext>& bitexts);

// BPE over both sides of every training bitext.
Vocabulary build_vocabulary(const std::vector<RawBitext>& train, std::size_t merges);

// Segments every bitext and groups the pairs by direction. With
// `bidirectional`, each pair also enters the corpus reversed.
ParallelCorpus build_corpus(const std::vector<AlignedBitext>& bitexts, const Vocabulary& vocab, bool bidirectional);

// Vocabulary and merges as one JSON object, for embedding in checkpoints.
nlohmann::json vocabulary_to_json(const Vocabulary& vocab);
Vocabulary vocabulary_from_json(const nlohmann::json& j);

// Aligner path: EM on bitext plus extras, Viterbi and 1-to-1 filter on bitext.
struct FaExtraction {
  AlignmentRun run;
  SentenceAlignments pairs;
};
FaExtraction extract_fa(const RawBitext& bitext, const std::vector<RawBitext>& extra, const AlignerOptions& options,
                        Symmetrize symmetrize);

// Lexicon path: lexicon from bitext, top-1 lookup and phrase merging.
struct W2wExtraction {
  Lexicon lexicon;
  SentenceAlignments pairs;
  std::size_t word_pairs = 0;  // before phrase merging
};
W2wExtraction extract_w2w(const RawBitext& bitext, const LexiconOptions& options, double threshold);

std::size_t count_pairs(const SentenceAlignments& a);

}  // namespace wcl
