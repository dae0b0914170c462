#include "wcl/lexicon.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>
#include <unordered_map>

#include "wcl/error.hpp"

namespace wcl {

namespace {

bool ranks_before(const LexiconEntry& a, const LexiconEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tgt < b.tgt;
}

}  // namespace

const std::vector<LexiconEntry>* Lexicon::find(std::string_view src) const {
  auto it = entries_.find(std::string(src));
  return it == entries_.end() ? nullptr : &it->second;
}

const LexiconEntry* Lexicon::top1(std::string_view src) const {
  const auto* list = find(src);
  return list && !list->empty() ? &list->front() : nullptr;
}

void Lexicon::write_tsv(std::ostream& out) const {
  out << std::setprecision(17);
  for (const auto& [src, list] : entries_) {
    for (const auto& e : list) out << src << '\t' << e.tgt << '\t' << e.score << '\n';
  }
}

Lexicon Lexicon::read_tsv(std::istream& in) {
  std::map<std::string, std::vector<LexiconEntry>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto a = line.find('\t');
    auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) throw ParseError(line_no, "expected 'src<TAB>tgt<TAB>score'");
    double score = 0;
    try {
      score = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad score");
    }
    entries[line.substr(0, a)].push_back({line.substr(a + 1, b - a - 1), score});
  }
  Lexicon lex;
  for (auto& [src, list] : entries) {
    std::sort(list.begin(), list.end(), ranks_before);
    lex.set(src, std::move(list));
  }
  return lex;
}

Lexicon build_lexicon(std::span<const WordSentencePair> corpus, const LexiconOptions& options) {
  if (corpus.empty()) throw ConfigError("cannot build a lexicon from an empty corpus");
  if (options.top_k < 1) throw ConfigError("lexicon top-k must be at least 1");

  std::unordered_map<std::string, double> src_count, tgt_count;
  std::map<std::string, std::unordered_map<std::string, double>> joint;
  for (const auto& pair : corpus) {
    std::set<std::string> srcs(pair.src.begin(), pair.src.end());
    std::set<std::string> tgts(pair.tgt.begin(), pair.tgt.end());
    for (const auto& s : srcs) ++src_count[s];
    for (const auto& t : tgts) ++tgt_count[t];
    for (const auto& s : srcs) {
      auto& row = joint[s];
      for (const auto& t : tgts) ++row[t];
    }
  }

  const double a = options.alpha;
  const double src_vocab = static_cast<double>(src_count.size());
  const double tgt_vocab = static_cast<double>(tgt_count.size());
  Lexicon lex;
  for (const auto& [s, row] : joint) {
    std::vector<LexiconEntry> ranked;
    ranked.reserve(row.size());
    for (const auto& [t, c] : row) {
      double p_t_given_s = (c + a) / (src_count[s] + a * tgt_vocab);
      double p_s_given_t = (c + a) / (tgt_count[t] + a * src_vocab);
      ranked.push_back({t, p_t_given_s * p_s_given_t});
    }
    std::sort(ranked.begin(), ranked.end(), ranks_before);
    if (ranked.size() > options.top_k) ranked.resize(options.top_k);
    lex.set(s, std::move(ranked));
  }
  return lex;
}

std::vector<WordPair> extract_pairs(const WordSentencePair& pair, const Lexicon& lexicon, double threshold) {
  struct Candidate {
    double score;
    std::size_t i, j;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < pair.src.size(); ++i) {
    const auto* best = lexicon.top1(pair.src[i]);
    if (!best || best->score < threshold) continue;
    for (std::size_t j = 0; j < pair.tgt.size(); ++j) {
      if (pair.tgt[j] == best->tgt) candidates.push_back({best->score, i, j});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
    if (x.score != y.score) return x.score > y.score;
    return std::tie(x.i, x.j) < std::tie(y.i, y.j);
  });
  std::vector<bool> src_used(pair.src.size()), tgt_used(pair.tgt.size());
  std::vector<WordPair> out;
  for (const auto& c : candidates) {
    if (src_used[c.i] || tgt_used[c.j]) continue;
    src_used[c.i] = tgt_used[c.j] = true;
    out.push_back({{c.i, c.i + 1}, {c.j, c.j + 1}});
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<WordPair> merge_phrases(std::vector<WordPair> pairs) {
  std::sort(pairs.begin(), pairs.end());
  std::vector<WordPair> out;
  for (const auto& p : pairs) {
    if (!out.empty() && out.back().src.end == p.src.begin && out.back().tgt.end == p.tgt.begin) {
      out.back().src.end = p.src.end;
      out.back().tgt.end = p.tgt.end;
    } else {
      out.push_back(p);
    }
  }
  return out;
}

bool is_maximal(const std::vector<WordPair>& pairs) {
  for (const auto& a : pairs) {
    for (const auto& b : pairs) {
      if (a.src.end == b.src.begin && a.tgt.end == b.tgt.begin) return false;
    }
  }
  return true;
}

double pairs_per_sentence(std::size_t total_pairs, std::size_t sentences) {
  if (sentences == 0) return 0.0;
  return static_cast<double>(total_pairs) / static_cast<double>(sentences);
}

}  // namespace wcl
