#include "wcl/pipeline.hpp"

#include <set>
#include <sstream>

#include "wcl/error.hpp"

namespace wcl {

std::vector<std::string> languages_of(const std::vector<RawBitext>& bitexts) {
  std::set<std::string> langs;
  for (const auto& b : bitexts) {
    langs.insert(b.src_lang);
    langs.insert(b.tgt_lang);
  }
  return {langs.begin(), langs.end()};
}

Vocabulary build_vocabulary(const std::vector<RawBitext>& train, std::size_t merges) {
  std::vector<std::string> lines;
  for (const auto& b : train) {
    lines.insert(lines.end(), b.src_lines.begin(), b.src_lines.end());
    lines.insert(lines.end(), b.tgt_lines.begin(), b.tgt_lines.end());
  }
  return train_bpe(lines, merges, languages_of(train));
}

ParallelCorpus build_corpus(const std::vector<AlignedBitext>& bitexts, const Vocabulary& vocab, bool bidirectional) {
  ParallelCorpus c;
  for (const auto& b : bitexts) {
    vocab.lang_tag(b.bitext.src_lang);  // throws on a language the vocabulary lacks
    vocab.lang_tag(b.bitext.tgt_lang);
    const auto* align = b.alignments.empty() ? nullptr : &b.alignments;
    for (auto& p : segment_bitext(b.bitext, vocab, align, &c.skipped)) {
      if (bidirectional) c.add(p.reversed());
      c.add(std::move(p));
    }
  }
  return c;
}

nlohmann::json vocabulary_to_json(const Vocabulary& vocab) {
  std::ostringstream tsv, merges;
  vocab.write_tsv(tsv);
  vocab.write_merges(merges);
  return {{"tsv", tsv.str()}, {"merges", merges.str()}};
}

Vocabulary vocabulary_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("tsv") || !j.contains("merges")) {
    throw ConfigError("checkpoint carries no vocabulary");
  }
  std::istringstream tsv(j["tsv"].get<std::string>()), merges(j["merges"].get<std::string>());
  Vocabulary v = Vocabulary::read_tsv(tsv);
  v.read_merges(merges);
  return v;
}

FaExtraction extract_fa(const RawBitext& bitext, const std::vector<RawBitext>& extra, const AlignerOptions& options,
                        Symmetrize symmetrize) {
  auto targets = word_pairs_of(bitext);
  auto training = targets;
  for (const auto& e : extra) {
    auto more = word_pairs_of(e);
    training.insert(training.end(), more.begin(), more.end());
  }
  FaExtraction r;
  r.run = align_corpus(training, targets, options, symmetrize);
  r.pairs.reserve(r.run.links.size());
  for (const auto& l : r.run.links) r.pairs.push_back(to_word_pairs(l));
  return r;
}

W2wExtraction extract_w2w(const RawBitext& bitext, const LexiconOptions& options, double threshold) {
  auto corpus = word_pairs_of(bitext);
  W2wExtraction r;
  r.lexicon = build_lexicon(corpus, options);
  r.pairs.reserve(corpus.size());
  for (const auto& p : corpus) {
    auto words = extract_pairs(p, r.lexicon, threshold);
    r.word_pairs += words.size();
    r.pairs.push_back(merge_phrases(std::move(words)));
  }
  return r;
}

std::size_t count_pairs(const SentenceAlignments& a) {
  std::size_t n = 0;
  for (const auto& s : a) n += s.size();
  return n;
}

}  // namespace wcl
