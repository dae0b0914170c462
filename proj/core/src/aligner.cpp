#include "wcl/aligner.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <thread>

#include "wcl/error.hpp"
#include "wcl/utf8.hpp"

namespace wcl {

std::vector<WordSentencePair> word_pairs_of(std::span<const SentencePair> pairs) {
  std::vector<WordSentencePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.src_words, p.tgt_words});
  return out;
}

std::vector<WordSentencePair> word_pairs_of(const RawBitext& bitext) {
  std::vector<WordSentencePair> out;
  out.reserve(bitext.size());
  for (std::size_t i = 0; i < bitext.size(); ++i) {
    out.push_back({split_words(bitext.src_lines[i]), split_words(bitext.tgt_lines[i])});
  }
  return out;
}

TranslationTable::TranslationTable(double p0, double lambda) : p0_(p0), lambda_(lambda) {
  if (!(p0 >= 0 && p0 < 1)) throw ConfigError("p0 must lie in [0, 1)");
  if (!(lambda >= 0)) throw ConfigError("lambda must be non-negative");
  src_ids_.emplace(std::string(kNullWord), 0);
  src_words_.emplace_back(kNullWord);
  theta_.emplace_back();
}

int TranslationTable::src_id(std::string_view w) const {
  auto it = src_ids_.find(std::string(w));
  return it == src_ids_.end() ? -1 : it->second;
}

int TranslationTable::tgt_id(std::string_view w) const {
  auto it = tgt_ids_.find(std::string(w));
  return it == tgt_ids_.end() ? -1 : it->second;
}

double TranslationTable::prob(std::string_view tgt, std::string_view src) const {
  int s = src_id(src), t = tgt_id(tgt);
  if (s < 0 || t < 0) return 0.0;
  const auto& row = theta_[static_cast<std::size_t>(s)];
  auto it = row.find(t);
  return it == row.end() ? 0.0 : it->second;
}

double TranslationTable::row_sum(std::string_view src) const {
  int s = src_id(src);
  if (s < 0) return 0.0;
  double sum = 0;
  for (const auto& [_, p] : theta_[static_cast<std::size_t>(s)]) sum += p;
  return sum;
}

std::vector<std::string> TranslationTable::sources() const { return src_words_; }

double TranslationTable::diagonal_prior(std::size_t i, std::size_t j, std::size_t n, std::size_t m) const {
  auto h = [&](std::size_t ii) {
    return std::abs(static_cast<double>(ii + 1) / static_cast<double>(n) -
                    static_cast<double>(j + 1) / static_cast<double>(m));
  };
  double z = 0;
  for (std::size_t k = 0; k < n; ++k) z += std::exp(-lambda_ * h(k));
  return (1.0 - p0_) * std::exp(-lambda_ * h(i)) / z;
}

void TranslationTable::write_tsv(std::ostream& out) const {
  std::map<std::string, std::map<std::string, double>> sorted;
  for (std::size_t s = 0; s < theta_.size(); ++s) {
    for (const auto& [t, p] : theta_[s]) sorted[src_words_[s]][tgt_words_[static_cast<std::size_t>(t)]] = p;
  }
  out << std::setprecision(17);
  for (const auto& [src, row] : sorted) {
    for (const auto& [tgt, p] : row) out << src << '\t' << tgt << '\t' << p << '\n';
  }
}

TranslationTable TranslationTable::read_tsv(std::istream& in, double p0, double lambda) {
  TranslationTable table(p0, lambda);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto a = line.find('\t');
    auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) throw ParseError(line_no, "expected 'src<TAB>tgt<TAB>prob'");
    std::string src = line.substr(0, a), tgt = line.substr(a + 1, b - a - 1);
    double p = 0;
    try {
      p = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad probability");
    }
    auto [sit, s_new] = table.src_ids_.emplace(src, static_cast<int>(table.src_words_.size()));
    if (s_new) {
      table.src_words_.push_back(src);
      table.theta_.emplace_back();
    }
    auto [tit, t_new] = table.tgt_ids_.emplace(tgt, static_cast<int>(table.tgt_words_.size()));
    if (t_new) table.tgt_words_.push_back(tgt);
    table.theta_[static_cast<std::size_t>(sit->second)][tit->second] = p;
  }
  return table;
}

// Holds the integerized corpus and runs EM over a TranslationTable.
class EmTrainer {
 public:
  EmTrainer(std::span<const WordSentencePair> corpus, const AlignerOptions& options)
      : options_(options), table_(options.p0, options.lambda) {
    for (const auto& pair : corpus) {
      Sentence s;
      for (const auto& w : pair.src) s.src.push_back(intern_src(w));
      for (const auto& w : pair.tgt) s.tgt.push_back(intern_tgt(w));
      if (!s.src.empty() && !s.tgt.empty()) sentences_.push_back(std::move(s));
    }
    if (sentences_.empty()) throw ConfigError("cannot train the aligner on an empty corpus");
    initialize();
  }

  EmResult run() {
    EmResult result;
    for (std::size_t it = 0; it < options_.iterations; ++it) {
      result.log_likelihood.push_back(e_step(true));
      m_step();
    }
    result.log_likelihood.push_back(e_step(false));
    result.table = std::move(table_);
    return result;
  }

 private:
  struct Sentence {
    std::vector<int> src;
    std::vector<int> tgt;
  };
  using Counts = std::vector<std::unordered_map<int, double>>;

  int intern_src(const std::string& w) {
    auto [it, fresh] = table_.src_ids_.emplace(w, static_cast<int>(table_.src_words_.size()));
    if (fresh) {
      table_.src_words_.push_back(w);
      table_.theta_.emplace_back();
    }
    return it->second;
  }

  int intern_tgt(const std::string& w) {
    auto [it, fresh] = table_.tgt_ids_.emplace(w, static_cast<int>(table_.tgt_words_.size()));
    if (fresh) table_.tgt_words_.push_back(w);
    return it->second;
  }

  // Uniform over the targets each source word co-occurs with.
  void initialize() {
    for (const auto& s : sentences_) {
      for (int t : s.tgt) {
        table_.theta_[0][t] = 1.0;
        for (int w : s.src) table_.theta_[static_cast<std::size_t>(w)][t] = 1.0;
      }
    }
    for (auto& row : table_.theta_) {
      for (auto& [_, p] : row) p = 1.0 / static_cast<double>(row.size());
    }
  }

  double theta(int s, int t) const {
    const auto& row = table_.theta_[static_cast<std::size_t>(s)];
    auto it = row.find(t);
    return it == row.end() ? 0.0 : it->second;
  }

  double shard(std::size_t begin, std::size_t end, Counts* counts) const {
    double ll = 0;
    std::vector<double> post;
    for (std::size_t k = begin; k < end; ++k) {
      const auto& s = sentences_[k];
      const std::size_t n = s.src.size(), m = s.tgt.size();
      post.resize(n + 1);
      for (std::size_t j = 0; j < m; ++j) {
        const int t = s.tgt[j];
        double z = post[0] = table_.p0_ * theta(0, t);
        for (std::size_t i = 0; i < n; ++i) {
          z += post[i + 1] = table_.diagonal_prior(i, j, n, m) * theta(s.src[i], t);
        }
        ll += std::log(z);
        if (!counts) continue;
        (*counts)[0][t] += post[0] / z;
        for (std::size_t i = 0; i < n; ++i) (*counts)[static_cast<std::size_t>(s.src[i])][t] += post[i + 1] / z;
      }
    }
    return ll;
  }

  // Returns the log-likelihood under the current table; accumulates expected
  // counts when `collect` is set.
  double e_step(bool collect) {
    const std::size_t shards = std::max<std::size_t>(1, std::min(options_.shards, sentences_.size()));
    std::vector<Counts> counts(collect ? shards : 0, Counts(table_.theta_.size()));
    std::vector<double> ll(shards, 0.0);
    auto work = [&](std::size_t sh) {
      std::size_t begin = sentences_.size() * sh / shards, end = sentences_.size() * (sh + 1) / shards;
      ll[sh] = shard(begin, end, collect ? &counts[sh] : nullptr);
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(options_.threads, shards));
    if (threads == 1) {
      for (std::size_t sh = 0; sh < shards; ++sh) work(sh);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t sh = w; sh < shards; sh += threads) work(sh);
        });
      }
    }
    double total = 0;
    for (double v : ll) total += v;
    if (collect) {
      accum_ = Counts(table_.theta_.size());
      for (const auto& c : counts) {
        for (std::size_t s = 0; s < c.size(); ++s) {
          for (const auto& [t, v] : c[s]) accum_[s][t] += v;
        }
      }
    }
    return total;
  }

  void m_step() {
    for (std::size_t s = 0; s < accum_.size(); ++s) {
      double sum = 0;
      for (const auto& [_, v] : accum_[s]) sum += v;
      if (!(sum > 0)) continue;
      auto& row = table_.theta_[s];
      for (auto& [t, p] : row) {
        auto it = accum_[s].find(t);
        p = it == accum_[s].end() ? 0.0 : it->second / sum;
      }
    }
  }

  AlignerOptions options_;
  TranslationTable table_;
  std::vector<Sentence> sentences_;
  Counts accum_;
};

EmResult em_train(std::span<const WordSentencePair> corpus, const AlignerOptions& options) {
  if (options.iterations < 1) throw ConfigError("aligner needs at least one EM iteration");
  return EmTrainer(corpus, options).run();
}

Links viterbi(const WordSentencePair& pair, const TranslationTable& table) {
  Links links;
  const std::size_t n = pair.src.size(), m = pair.tgt.size();
  auto floored = [](double p) { return p > 0 ? p : kOovFloor; };
  for (std::size_t j = 0; j < m; ++j) {
    double best = table.p0() * floored(table.null_prob(pair.tgt[j]));
    std::size_t best_i = n;  // null
    for (std::size_t i = 0; i < n; ++i) {
      double score = table.diagonal_prior(i, j, n, m) * floored(table.prob(pair.tgt[j], pair.src[i]));
      if (score > best) {
        best = score;
        best_i = i;
      }
    }
    if (best_i < n) links.push_back({best_i, j});
  }
  return links;
}

Links filter_one_to_one(const Links& links) {
  std::map<std::size_t, int> src_uses, tgt_uses;
  for (const auto& l : links) {
    ++src_uses[l.src];
    ++tgt_uses[l.tgt];
  }
  Links out;
  for (const auto& l : links) {
    if (src_uses[l.src] == 1 && tgt_uses[l.tgt] == 1) out.push_back(l);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool is_one_to_one(const Links& links) {
  std::map<std::size_t, int> src_uses, tgt_uses;
  for (const auto& l : links) {
    if (++src_uses[l.src] > 1 || ++tgt_uses[l.tgt] > 1) return false;
  }
  return true;
}

Links intersect(const Links& forward, const Links& backward) {
  Links transposed;
  for (const auto& l : backward) transposed.push_back({l.tgt, l.src});
  std::sort(transposed.begin(), transposed.end());
  Links out;
  for (const auto& l : forward) {
    if (std::binary_search(transposed.begin(), transposed.end(), l)) out.push_back(l);
  }
  std::sort(out.begin(), out.end());
  return out;
}

AlignmentRun align_corpus(std::span<const WordSentencePair> training, std::span<const WordSentencePair> targets,
                          const AlignerOptions& options, Symmetrize symmetrize) {
  AlignmentRun run;
  run.forward = em_train(training, options);
  std::optional<EmResult> backward;
  if (symmetrize == Symmetrize::kIntersection) {
    std::vector<WordSentencePair> flipped;
    flipped.reserve(training.size());
    for (const auto& p : training) flipped.push_back({p.tgt, p.src});
    backward = em_train(flipped, options);
    run.backward_log_likelihood = backward->log_likelihood;
  }
  run.links.reserve(targets.size());
  for (const auto& pair : targets) {
    Links links = viterbi(pair, run.forward.table);
    if (backward) links = intersect(links, viterbi({pair.tgt, pair.src}, backward->table));
    run.links.push_back(filter_one_to_one(links));
  }
  return run;
}

}  // namespace wcl
