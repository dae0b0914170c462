#include <gtest/gtest.h>

#include <numeric>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "wcl/error.hpp"
#include "wcl/lexicon.hpp"

using namespace wcl;

namespace {

std::vector<WordSentencePair> corpus_of(const std::vector<std::pair<std::string, std::string>>& lines) {
  RawBitext b{"s", "t", {}, {}};
  for (const auto& [s, t] : lines) {
    b.src_lines.push_back(s);
    b.tgt_lines.push_back(t);
  }
  return word_pairs_of(b);
}

WordPair wp(std::size_t i, std::size_t j) { return {{i, i + 1}, {j, j + 1}}; }

// Random 1-word pairs, unique per coordinate.
std::vector<WordPair> random_links(std::mt19937_64& rng) {
  const std::size_t n = 1 + rng() % 12;
  std::vector<std::size_t> tgt(n);
  std::iota(tgt.begin(), tgt.end(), 0);
  // Mostly monotone runs with occasional swaps, so merges actually happen.
  for (std::size_t k = 0; k < n; ++k) {
    if (rng() % 3 == 0) std::swap(tgt[k], tgt[rng() % n]);
  }
  std::vector<WordPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng() % 5 != 0) out.push_back(wp(i, tgt[i]));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::set<std::pair<std::size_t, std::size_t>> covered_cells(const std::vector<WordPair>& pairs) {
  std::set<std::pair<std::size_t, std::size_t>> cells;
  for (const auto& p : pairs) {
    EXPECT_EQ(p.src.size(), p.tgt.size());
    for (std::size_t k = 0; k < p.src.size(); ++k) cells.emplace(p.src.begin + k, p.tgt.begin + k);
  }
  return cells;
}

}  // namespace

TEST(BuildLexicon, DominantCooccurrenceRanksFirst) {
  auto c = corpus_of({{"a", "x"}, {"a", "x"}, {"b", "y"}});
  auto lex = build_lexicon(c, {});
  ASSERT_NE(lex.top1("a"), nullptr);
  EXPECT_EQ(lex.top1("a")->tgt, "x");
  // count(a,x) = 2, count(a) = count(x) = 2, two words per side, alpha 0.1.
  EXPECT_NEAR(lex.top1("a")->score, (2.1 / 2.2) * (2.1 / 2.2), 1e-15);
  EXPECT_EQ(lex.top1("b")->tgt, "y");
  EXPECT_EQ(lex.top1("zz"), nullptr);
}

TEST(BuildLexicon, MatchesHandCounts) {
  auto c = corpus_of({{"a b", "x y"}, {"a", "x"}, {"b c", "y z"}});
  auto lex = build_lexicon(c, {});
  // Sentence counts: a 2, b 2, c 1; x 2, y 2, z 1. Three words per side.
  const auto* a = lex.find("a");
  ASSERT_NE(a, nullptr);
  ASSERT_EQ(a->size(), 2u);
  EXPECT_EQ((*a)[0].tgt, "x");
  EXPECT_NEAR((*a)[0].score, (2.1 / 2.3) * (2.1 / 2.3), 1e-15);
  EXPECT_NEAR((*a)[1].score, (1.1 / 2.3) * (1.1 / 2.3), 1e-15);
  const auto* cz = lex.find("c");
  ASSERT_NE(cz, nullptr);
  EXPECT_EQ((*cz)[0].tgt, "z");
  EXPECT_NEAR((*cz)[0].score, (1.1 / 1.3) * (1.1 / 1.3), 1e-15);
  EXPECT_NEAR((*cz)[1].score, (1.1 / 1.3) * (1.1 / 2.3), 1e-15);
  EXPECT_EQ(lex.find("b")->front().tgt, "y");
}

TEST(BuildLexicon, SingleCandidateAndTopK) {
  auto c = corpus_of({{"q", "w"}, {"a b", "x y z"}, {"a", "y z"}});
  EXPECT_EQ(build_lexicon(c, {}).top1("q")->tgt, "w");
  LexiconOptions one;
  one.top_k = 1;
  const auto top1 = build_lexicon(c, one);
  for (const auto& [src, list] : top1.entries()) EXPECT_LE(list.size(), 1u) << src;
  one.top_k = 0;
  EXPECT_THROW(build_lexicon(c, one), ConfigError);
  EXPECT_THROW(build_lexicon({}, {}), ConfigError);
}

TEST(BuildLexicon, ListsSortedWithLexicographicTies) {
  auto c = corpus_of({{"a", "y x"}, {"b c", "p q r"}});
  auto lex = build_lexicon(c, {});
  const auto* a = lex.find("a");
  ASSERT_EQ(a->size(), 2u);
  EXPECT_EQ((*a)[0].tgt, "x");
  EXPECT_EQ((*a)[1].tgt, "y");
  for (const auto& [src, list] : lex.entries()) {
    for (std::size_t k = 1; k < list.size(); ++k) EXPECT_GE(list[k - 1].score, list[k].score);
  }
}

TEST(Lexicon, TsvRoundTrip) {
  auto toy = test::make_toy(60, 20, 5);
  auto lex = build_lexicon(word_pairs_of(toy.rev.bitext), {});
  std::stringstream a;
  lex.write_tsv(a);
  auto back = Lexicon::read_tsv(a);
  std::ostringstream b;
  back.write_tsv(b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(back.size(), lex.size());
}

TEST(ExtractPairs, DirectLookup) {
  auto c = corpus_of({{"a b", "x y"}, {"a", "x"}, {"b", "y"}});
  auto lex = build_lexicon(c, {});
  EXPECT_EQ(extract_pairs(c[0], lex), (std::vector<WordPair>{wp(0, 0), wp(1, 1)}));
  EXPECT_TRUE(extract_pairs({{"q"}, {"w"}}, lex).empty());
}

TEST(ExtractPairs, EachWordUsedOnce) {
  auto c = corpus_of({{"a", "x"}, {"a", "x"}});
  auto lex = build_lexicon(c, {});
  auto pairs = extract_pairs({{"a", "a"}, {"x"}}, lex);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0], wp(0, 0));
}

TEST(ExtractPairs, ThresholdFiltersLowScores) {
  auto c = corpus_of({{"a", "x"}, {"a", "x"}, {"b", "y z"}});
  auto lex = build_lexicon(c, {});
  const double sa = lex.top1("a")->score, sb = lex.top1("b")->score;
  ASSERT_GT(sa, sb);
  auto kept = extract_pairs({{"a", "b"}, {"x", lex.top1("b")->tgt}}, lex, (sa + sb) / 2);
  EXPECT_EQ(kept, (std::vector<WordPair>{wp(0, 0)}));
}

TEST(MergePhrases, Examples) {
  EXPECT_EQ(merge_phrases({wp(2, 5), wp(3, 6)}), (std::vector<WordPair>{{{2, 4}, {5, 7}}}));
  EXPECT_EQ(merge_phrases({wp(2, 5), wp(3, 9)}), (std::vector<WordPair>{wp(2, 5), wp(3, 9)}));
  EXPECT_EQ(merge_phrases({wp(2, 6), wp(3, 5)}), (std::vector<WordPair>{wp(2, 6), wp(3, 5)}));
  EXPECT_TRUE(merge_phrases({}).empty());
}

TEST(MergePhrases, PropertiesOnRandomLinkSets) {
  std::mt19937_64 rng(2024);
  std::size_t merged_somewhere = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    auto in = random_links(rng);
    auto once = merge_phrases(in);
    auto twice = merge_phrases(once);
    ASSERT_EQ(once, twice) << "trial " << trial;
    ASSERT_TRUE(is_maximal(once)) << "trial " << trial;
    ASSERT_EQ(covered_cells(once), covered_cells(in)) << "trial " << trial;
    // Merging only joins runs, so every output cell pair is consecutive.
    merged_somewhere += once.size() < in.size();
  }
  EXPECT_GT(merged_somewhere, 100u);
}

TEST(MergePhrases, OutputHasNoMergeablePair) {
  EXPECT_FALSE(is_maximal({wp(0, 0), wp(1, 1)}));
  EXPECT_TRUE(is_maximal({wp(0, 1), wp(1, 0)}));
}

TEST(PairsPerSentence, Ratio) {
  EXPECT_DOUBLE_EQ(pairs_per_sentence(0, 100), 0.0);
  EXPECT_DOUBLE_EQ(pairs_per_sentence(0, 0), 0.0);
  EXPECT_NEAR(pairs_per_sentence(5762977, 1900000), 3.03, 0.01);
  EXPECT_DOUBLE_EQ(pairs_per_sentence(6, 4), 1.5);
}

TEST(Lexicon, RecoversGeneratingDictionary) {
  auto xx = make_words(50, 0, 3), yy = make_words(50, 1, 4);
  auto syn = generate_corpus({xx, yy}, "xx", "yy", {200, 3, 8, WordOrder::kMonotone, 5});
  auto lex = build_lexicon(word_pairs_of(syn.bitext), {});
  const auto dict = Dictionary{xx, yy}.forward();
  std::size_t seen = 0, right = 0;
  for (const auto& [src, tgt] : dict) {
    const auto* top = lex.top1(src);
    if (!top) continue;
    ++seen;
    right += top->tgt == tgt;
  }
  ASSERT_GT(seen, 0u);
  EXPECT_GE(static_cast<double>(right) / static_cast<double>(seen), 0.9);
}
