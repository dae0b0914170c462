#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "wcl/corpus.hpp"
#include "wcl/error.hpp"
#include "wcl/utf8.hpp"

using namespace wcl;

namespace {

std::vector<std::string> learned_pieces(const Vocabulary& v) {
  std::vector<std::string> out;
  for (std::size_t i = v.num_special(); i < v.size(); ++i) out.push_back(v.piece(static_cast<TokenId>(i)));
  return out;
}

}  // namespace

TEST(Bpe, NoMergesGivesCharacters) {
  Vocabulary v = train_bpe({"ab ab"}, 0, {"xx"});
  auto pieces = learned_pieces(v);
  std::sort(pieces.begin(), pieces.end());
  EXPECT_EQ(pieces, (std::vector<std::string>{"</w>", "a", "b"}));
  EXPECT_TRUE(v.merges().empty());
}

TEST(Bpe, FirstMergeIsMostFrequentPair) {
  // "aaab</w>" twice: (a,a) occurs 2 x 2 = 4 times, every other pair twice.
  Vocabulary v = train_bpe({"aaab aaab"}, 1, {});
  ASSERT_EQ(v.merges().size(), 1u);
  EXPECT_EQ(v.merges()[0], (std::pair<std::string, std::string>{"a", "a"}));
}

TEST(Bpe, TiesBreakTowardSmallestPair) {
  // Every adjacent pair of "ba" and "dc" occurs once; (a,</w>) sorts first.
  Vocabulary v = train_bpe({"dc ba"}, 1, {});
  ASSERT_EQ(v.merges().size(), 1u);
  EXPECT_EQ(v.merges()[0], (std::pair<std::string, std::string>{"a", "</w>"}));
}

TEST(Bpe, EncodeDecodeRoundTrip) {
  auto toy = test::make_toy(50, 20, 7, 40);
  for (const auto& line : toy.copy.bitext.tgt_lines) {
    std::vector<TokenId> ids;
    for (const auto& w : split_words(line)) {
      auto part = toy.vocab.encode_word(w);
      ids.insert(ids.end(), part.begin(), part.end());
    }
    EXPECT_EQ(toy.vocab.decode(ids), split_words(line));
  }
}

TEST(Bpe, DeterministicAndRejectsEmptyCorpus) {
  std::vector<std::string> lines = {"the cat sat", "the hat", "a cat"};
  Vocabulary a = train_bpe(lines, 6, {"en"}), b = train_bpe(lines, 6, {"en"});
  EXPECT_EQ(a.merges(), b.merges());
  EXPECT_EQ(learned_pieces(a), learned_pieces(b));
  EXPECT_THROW(train_bpe({"", "  "}, 3, {}), ConfigError);
}

TEST(Vocabulary, TsvAndMergesRoundTrip) {
  Vocabulary v = train_bpe({"the cat sat", "the hat"}, 5, {"en", "de"});
  std::stringstream tsv, merges;
  v.write_tsv(tsv);
  v.write_merges(merges);
  Vocabulary w = Vocabulary::read_tsv(tsv);
  w.read_merges(merges);
  EXPECT_EQ(w.size(), v.size());
  EXPECT_EQ(w.languages(), v.languages());
  EXPECT_EQ(w.encode_word("cat"), v.encode_word("cat"));
  EXPECT_EQ(w.lang_tag("de"), v.lang_tag("de"));
}

TEST(Vocabulary, MalformedTsvReportsLine) {
  std::stringstream in("<pad>\t0\n<s>\t1\n</s>\tx\n");
  try {
    Vocabulary::read_tsv(in);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Segment, SpansCoverMultiSubwordWords) {
  Vocabulary v({"en", "fr"});
  for (const char* p : {"c", "a", "t", "s", "x", "</w>", "ca", "ts", "ts</w>", "x</w>"}) v.add_piece(p);
  v.set_merges({{"c", "a"}, {"t", "s"}, {"ts", "</w>"}, {"x", "</w>"}});
  auto p = segment("x x x cats", "x", "en", "fr", v);
  ASSERT_TRUE(p);
  ASSERT_EQ(p->src_spans.size(), 4u);
  EXPECT_EQ(p->src_spans[0], (WordRange{0, 1}));
  EXPECT_EQ(p->src_spans[3], (WordRange{3, 5}));
  EXPECT_EQ(v.piece(p->src_subwords[3]), "ca");
  EXPECT_EQ(v.piece(p->src_subwords[4]), "ts</w>");
  EXPECT_EQ(p->tgt_spans[0], (WordRange{0, 1}));
}

TEST(Segment, UnknownCharactersMapToUnk) {
  Vocabulary v({"en"});
  v.add_piece("a");
  v.add_piece("</w>");
  auto p = segment("aq", "a", "en", "en", v);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->src_subwords, (std::vector<TokenId>{v.piece_id("a"), Vocabulary::kUnk, v.piece_id("</w>")}));
}

TEST(Segment, EmptySideIsSkipped) {
  Vocabulary v({"en"});
  EXPECT_FALSE(segment("", "a", "en", "en", v));
  EXPECT_FALSE(segment("a", "   ", "en", "en", v));
  RawBitext b{"xx", "yy", {"a b", "", "c"}, {"x", "y", "z"}};
  std::size_t skipped = 0;
  auto pairs = segment_bitext(b, train_bpe({"a b c x y z"}, 0, {"xx", "yy"}), nullptr, &skipped);
  EXPECT_EQ(pairs.size(), 2u);
  EXPECT_EQ(skipped, 1u);
  EXPECT_EQ(pairs[1].line, 2u);
}

TEST(Segment, SpansPartitionEverySentence) {
  auto toy = test::make_toy(100, 30, 3, 15);
  std::size_t skipped = 0;
  for (const auto* b : {&toy.copy.bitext, &toy.rev.bitext}) {
    for (const auto& p : segment_bitext(*b, toy.vocab, nullptr, &skipped)) {
      EXPECT_TRUE(spans_partition(p.src_spans, p.src_subwords.size()));
      EXPECT_TRUE(spans_partition(p.tgt_spans, p.tgt_subwords.size()));
    }
  }
  EXPECT_FALSE(spans_partition({{0, 1}, {2, 3}}, 3));
  EXPECT_FALSE(spans_partition({{0, 1}}, 2));
}

TEST(Segment, OutOfRangeAlignmentIsRejected) {
  Vocabulary v = train_bpe({"a b x y"}, 0, {"xx", "yy"});
  RawBitext b{"xx", "yy", {"a b"}, {"x y"}};
  std::vector<std::vector<WordPair>> bad = {{{{0, 1}, {0, 3}}}};
  EXPECT_THROW(segment_bitext(b, v, &bad, nullptr), ConfigError);
  std::vector<std::vector<WordPair>> short_file;
  EXPECT_THROW(segment_bitext(b, v, &short_file, nullptr), ConfigError);
}

TEST(Sampling, ProbabilitiesFollowTemperature) {
  auto p = sampling_probabilities({100, 100}, 1.5);
  EXPECT_NEAR(p[0], 0.5, 1e-15);
  EXPECT_NEAR(p[1], 0.5, 1e-15);
  p = sampling_probabilities({8, 1}, 1.0);
  EXPECT_NEAR(p[0], 8.0 / 9.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 9.0, 1e-15);
  // 8^(2/3) = 4.
  p = sampling_probabilities({8, 1}, 1.5);
  EXPECT_NEAR(p[0], 0.8, 1e-12);
  EXPECT_NEAR(p[1], 0.2, 1e-12);
  EXPECT_THROW(sampling_probabilities({1}, 0.0), ConfigError);
}

TEST(Batching, BudgetIsNeverExceeded) {
  auto toy = test::make_toy(200, 30, 11);
  ParallelCorpus c;
  for (const auto* b : {&toy.copy.bitext, &toy.rev.bitext}) {
    for (auto& p : segment_bitext(*b, toy.vocab, nullptr, nullptr)) c.add(std::move(p));
  }
  BatchStream s(c, {60, 1.5, 4});
  for (int i = 0; i < 200; ++i) {
    Batch b = s.next();
    ASSERT_FALSE(b.pairs.empty());
    EXPECT_LE(b.token_count, 60u);
    std::size_t n = 0;
    for (const auto& p : b.pairs) n += p.token_count();
    EXPECT_EQ(n, b.token_count);
  }
}

TEST(Batching, OversizedPairsAreDroppedAndCounted) {
  auto toy = test::make_toy(100, 30, 12);
  ParallelCorpus c;
  std::size_t longer = 0;
  for (auto& p : segment_bitext(toy.copy.bitext, toy.vocab, nullptr, nullptr)) {
    if (p.token_count() > 20) ++longer;
    c.add(std::move(p));
  }
  ASSERT_GT(longer, 0u);
  BatchStream s(c, {20, 1.5, 1});
  EXPECT_EQ(s.dropped(), longer);
  for (int i = 0; i < 50; ++i) {
    for (const auto& p : s.next().pairs) EXPECT_LE(p.token_count(), 20u);
  }
  EXPECT_THROW(BatchStream(c, {2, 1.5, 1}), ConfigError);
}

TEST(Batching, StreamIsDeterministicPerSeed) {
  auto toy = test::make_toy(150, 30, 13);
  ParallelCorpus c;
  for (const auto* b : {&toy.copy.bitext, &toy.rev.bitext}) {
    for (auto& p : segment_bitext(*b, toy.vocab, nullptr, nullptr)) c.add(std::move(p));
  }
  auto lines = [&](std::uint64_t seed) {
    BatchStream s(c, {80, 1.5, seed});
    std::vector<std::pair<std::string, std::size_t>> out;
    for (int i = 0; i < 100; ++i) {
      for (const auto& p : s.next().pairs) out.emplace_back(p.lang_pair(), p.line);
    }
    return out;
  };
  EXPECT_EQ(lines(5), lines(5));
  EXPECT_NE(lines(5), lines(6));
}

TEST(Batching, BatchCollectsAlignmentsWithSentenceIndex) {
  Vocabulary v = train_bpe({"a b x y"}, 0, {"xx", "yy"});
  RawBitext b{"xx", "yy", {"a b", "b"}, {"x y", "y"}};
  std::vector<std::vector<WordPair>> al = {{{{0, 1}, {0, 1}}, {{1, 2}, {1, 2}}}, {{{0, 1}, {0, 1}}}};
  Batch batch = make_batch(segment_bitext(b, v, &al, nullptr));
  ASSERT_EQ(batch.alignments.size(), 3u);
  EXPECT_EQ(batch.alignments.entries[2].sentence, 1u);
  EXPECT_EQ(batch.token_count, 4u + 4u + 2u + 2u);
}

TEST(Bitext, SpecParsesRightmostColons) {
  auto s = BitextSpec::parse("dir:with:colons/train:en:de");
  EXPECT_EQ(s.prefix, "dir:with:colons/train");
  EXPECT_EQ(s.src_path(), "dir:with:colons/train.en");
  EXPECT_EQ(s.label(), "en-de");
  EXPECT_THROW(BitextSpec::parse("train.en"), ConfigError);
  EXPECT_THROW(BitextSpec::parse("train:en"), ConfigError);
  EXPECT_THROW(BitextSpec::parse(":en:de"), ConfigError);
}

TEST(Bitext, WriteReadRoundTripAndLineCountCheck) {
  auto dir = std::filesystem::temp_directory_path() / "wcl_test_bitext";
  std::filesystem::create_directories(dir);
  BitextSpec spec{(dir / "t").string(), "en", "de"};
  RawBitext b{"en", "de", {"a b", "c"}, {"x", "y z"}};
  write_bitext(spec, b);
  RawBitext r = read_bitext(spec);
  EXPECT_EQ(r.src_lines, b.src_lines);
  EXPECT_EQ(r.tgt_lines, b.tgt_lines);
  std::ofstream(spec.tgt_path(), std::ios::app) << "extra\n";
  EXPECT_THROW(read_bitext(spec), ConfigError);
  EXPECT_THROW(read_bitext({(dir / "missing").string(), "en", "de"}), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST(SentencePair, ReversedSwapsSidesAndAlignments) {
  Vocabulary v = train_bpe({"a b x y"}, 0, {"xx", "yy"});
  RawBitext b{"xx", "yy", {"a b"}, {"x"}};
  std::vector<std::vector<WordPair>> al = {{{{0, 2}, {0, 1}}}};
  auto p = segment_bitext(b, v, &al, nullptr)[0];
  auto r = p.reversed();
  EXPECT_EQ(r.lang_pair(), "yy-xx");
  EXPECT_EQ(r.src_words, p.tgt_words);
  EXPECT_EQ(r.src_subwords, p.tgt_subwords);
  EXPECT_EQ(r.tgt_spans, p.src_spans);
  ASSERT_EQ(r.alignment.size(), 1u);
  EXPECT_EQ(r.alignment[0].src, (WordRange{0, 1}));
  EXPECT_EQ(r.alignment[0].tgt, (WordRange{0, 2}));
}
