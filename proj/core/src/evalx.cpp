#include "wcl/evalx.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "wcl/error.hpp"
#include "wcl/objective.hpp"
#include "wcl/utf8.hpp"

namespace wcl {

namespace {

struct SentenceStats {
  std::array<std::size_t, 4> matches{};
  std::array<std::size_t, 4> totals{};
  std::size_t hyp = 0;
  std::size_t ref = 0;

  SentenceStats& operator+=(const SentenceStats& o) {
    for (int n = 0; n < 4; ++n) {
      matches[n] += o.matches[n];
      totals[n] += o.totals[n];
    }
    hyp += o.hyp;
    ref += o.ref;
    return *this;
  }
};

SentenceStats sentence_stats(const Tokens& hyp, const Tokens& ref) {
  SentenceStats s;
  s.hyp = hyp.size();
  s.ref = ref.size();
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<std::vector<std::string>, std::size_t> ref_counts, hyp_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[Tokens(ref.begin() + i, ref.begin() + i + n)];
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[Tokens(hyp.begin() + i, hyp.begin() + i + n)];
    std::size_t m = 0;
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) m += std::min(c, it->second);
    }
    s.matches[n - 1] = m;
    s.totals[n - 1] = hyp.size() >= n ? hyp.size() - n + 1 : 0;
  }
  return s;
}

BleuReport report_from(const SentenceStats& s) {
  BleuReport r;
  r.matches = s.matches;
  r.totals = s.totals;
  r.hyp_length = s.hyp;
  r.ref_length = s.ref;
  double log_sum = 0;
  for (int n = 0; n < 4; ++n) {
    const double total = static_cast<double>(std::max<std::size_t>(s.totals[n], 1));
    r.precisions[n] = s.totals[n] ? static_cast<double>(s.matches[n]) / static_cast<double>(s.totals[n]) : 0.0;
    const double num = s.matches[n] ? static_cast<double>(s.matches[n]) : 1e-9;
    log_sum += std::log(num / total);
  }
  if (s.hyp == 0) {
    r.brevity_penalty = 0;
  } else if (s.hyp > s.ref) {
    r.brevity_penalty = 1;
  } else {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(s.ref) / static_cast<double>(s.hyp));
  }
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

void check_counts(std::size_t hyps, std::size_t refs) {
  if (hyps != refs) {
    throw ConfigError("hypothesis count " + std::to_string(hyps) + " != reference count " + std::to_string(refs));
  }
  if (hyps == 0) throw ConfigError("BLEU over an empty corpus");
}

std::vector<double> normalized(const std::vector<double>& v) {
  double sq = 0;
  for (double x : v) sq += x * x;
  const double n = std::max(std::sqrt(sq), 1e-8);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

std::vector<double> to_vector(const Tensor& row) { return {row.values().begin(), row.values().end()}; }

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

nlohmann::json BleuReport::to_json() const {
  return {{"score", score},
          {"precisions", precisions},
          {"matches", matches},
          {"totals", totals},
          {"brevity_penalty", brevity_penalty},
          {"hyp_length", hyp_length},
          {"ref_length", ref_length}};
}

std::string BleuReport::to_text() const {
  std::ostringstream os;
  os << "BLEU = " << fixed(score, 2) << "  ";
  for (int n = 0; n < 4; ++n) os << (n ? "/" : "") << fixed(100 * precisions[n], 1);
  os << "  (BP = " << fixed(brevity_penalty, 3) << ", hyp_len = " << hyp_length << ", ref_len = " << ref_length
     << ")";
  return os.str();
}

BleuReport bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  check_counts(hyps.size(), refs.size());
  SentenceStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += sentence_stats(hyps[i], refs[i]);
  return report_from(total);
}

BleuReport bleu_lines(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  std::vector<Tokens> h, r;
  for (const auto& l : hyps) h.push_back(split_words(l));
  for (const auto& l : refs) r.push_back(split_words(l));
  return bleu(h, r);
}

nlohmann::json BootstrapResult::to_json() const {
  return {{"bleu_a", bleu_a},
          {"bleu_b", bleu_b},
          {"frac_a_not_better", frac_a_not_better},
          {"frac_b_not_better", frac_b_not_better},
          {"p_value", p_value},
          {"resamples", resamples}};
}

BootstrapResult bootstrap_significance(const std::vector<Tokens>& hyp_a, const std::vector<Tokens>& hyp_b,
                                       const std::vector<Tokens>& refs, std::size_t resamples, std::uint64_t seed) {
  check_counts(hyp_a.size(), refs.size());
  check_counts(hyp_b.size(), refs.size());
  if (resamples < 100) throw ConfigError("bootstrap needs at least 100 resamples");
  const std::size_t n = refs.size();
  std::vector<SentenceStats> a(n), b(n);
  SentenceStats ta, tb;
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = sentence_stats(hyp_a[i], refs[i]);
    b[i] = sentence_stats(hyp_b[i], refs[i]);
    ta += a[i];
    tb += b[i];
  }
  BootstrapResult r;
  r.bleu_a = report_from(ta).score;
  r.bleu_b = report_from(tb).score;
  r.resamples = resamples;
  std::mt19937_64 rng(seed);
  std::size_t a_le = 0, b_le = 0;
  for (std::size_t k = 0; k < resamples; ++k) {
    SentenceStats sa, sb;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = static_cast<std::size_t>(rng() % n);
      sa += a[j];
      sb += b[j];
    }
    const double x = report_from(sa).score, y = report_from(sb).score;
    if (x <= y) ++a_le;
    if (y <= x) ++b_le;
  }
  r.frac_a_not_better = static_cast<double>(a_le) / static_cast<double>(resamples);
  r.frac_b_not_better = static_cast<double>(b_le) / static_cast<double>(resamples);
  r.p_value = std::min(1.0, 2.0 * std::min(r.frac_a_not_better, r.frac_b_not_better));
  return r;
}

double retrieval_p1(const Embeddings& queries, const Embeddings& candidates) {
  if (queries.size() != candidates.size()) {
    throw ContractViolation("retrieval: " + std::to_string(queries.size()) + " queries for " +
                            std::to_string(candidates.size()) + " candidates");
  }
  if (queries.empty()) throw ContractViolation("retrieval over an empty set");
  std::vector<std::vector<double>> c;
  c.reserve(candidates.size());
  for (const auto& v : candidates) c.push_back(normalized(v));
  std::size_t hits = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto qn = normalized(queries[q]);
    if (qn.size() != c[0].size()) throw ContractViolation("retrieval: embedding widths differ");
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < c.size(); ++k) {
      double s = 0;
      for (std::size_t i = 0; i < qn.size(); ++i) s += qn[i] * c[k][i];
      if (s > best_sim) {
        best_sim = s;
        best = k;
      }
    }
    hits += best == q;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

std::string to_string(RetrievalScope scope) { return scope == RetrievalScope::kFull ? "full" : "in_batch"; }

RetrievalScope parse_scope(const std::string& text) {
  if (text == "full") return RetrievalScope::kFull;
  if (text == "in_batch") return RetrievalScope::kInBatch;
  throw ConfigError("unknown retrieval scope '" + text + "' (expected in_batch or full)");
}

std::string to_string(Granularity g) { return g == Granularity::kSentence ? "sentence" : "word"; }

Granularity parse_granularity(const std::string& text) {
  if (text == "sentence") return Granularity::kSentence;
  if (text == "word") return Granularity::kWord;
  throw ConfigError("unknown granularity '" + text + "' (expected sentence or word)");
}

double RetrievalReport::mean() const {
  if (entries.empty()) return 0;
  double s = 0;
  for (const auto& e : entries) s += e.average;
  return s / static_cast<double>(entries.size());
}

const RetrievalEntry* RetrievalReport::find(const std::string& pair) const {
  for (const auto& e : entries) {
    if (e.pair == pair) return &e;
  }
  return nullptr;
}

nlohmann::json RetrievalReport::to_json() const {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& e : entries) {
    pairs.push_back({{"pair", e.pair},
                     {"forward", e.forward},
                     {"backward", e.backward},
                     {"average", e.average},
                     {"queries", e.queries}});
  }
  return {{"granularity", to_string(granularity)}, {"scope", to_string(scope)}, {"pairs", pairs}, {"mean", mean()}};
}

std::string RetrievalReport::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(12) << "pair" << std::right << std::setw(10) << "forward" << std::setw(10)
     << "backward" << std::setw(10) << "average" << std::setw(9) << "queries" << "\n";
  for (const auto& e : entries) {
    os << std::left << std::setw(12) << e.pair << std::right << std::setw(10) << fixed(e.forward, 4) << std::setw(10)
       << fixed(e.backward, 4) << std::setw(10) << fixed(e.average, 4) << std::setw(9) << e.queries << "\n";
  }
  return os.str();
}

PairedEmbeddings sentence_embeddings(const Transformer& model, const Vocabulary& vocab,
                                     const std::vector<SentencePair>& pairs, std::size_t budget) {
  PairedEmbeddings out;
  for (const auto& batch : sequential_batches(pairs, budget)) {
    Tape tape(false);
    RunContext ctx{&tape};
    std::vector<std::vector<TokenId>> src, tgt;
    for (const auto& p : batch.pairs) {
      src.push_back(source_input(p, vocab));
      tgt.push_back(target_as_source_input(p, vocab));
    }
    EncoderOutput es = model.encode(ctx, src), et = model.encode(ctx, tgt);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      out.src.push_back(to_vector(pool_subwords(tape, model, es, s, batch.pairs[s].src_subwords.size())));
      out.tgt.push_back(to_vector(pool_subwords(tape, model, et, s, batch.pairs[s].tgt_subwords.size())));
    }
  }
  return out;
}

std::vector<PairedEmbeddings> word_embeddings(const Transformer& model, const Vocabulary& vocab,
                                              const std::vector<SentencePair>& pairs, std::size_t batch_tokens) {
  std::vector<PairedEmbeddings> out;
  for (const auto& batch : sequential_batches(pairs, batch_tokens)) {
    if (batch.alignments.empty()) continue;
    Tape tape(false);
    RunContext ctx{&tape};
    std::vector<std::vector<TokenId>> src, tgt;
    for (const auto& p : batch.pairs) {
      src.push_back(source_input(p, vocab));
      tgt.push_back(target_as_source_input(p, vocab));
    }
    EncoderOutput es = model.encode(ctx, src), et = model.encode(ctx, tgt);
    RepPair pooled = gather_pooled(tape, model, batch, es, et);
    PairedEmbeddings g;
    for (std::size_t k = 0; k < pooled.src.rows(); ++k) {
      g.src.push_back(to_vector(tape.slice(pooled.src, 0, k, k + 1)));
      g.tgt.push_back(to_vector(tape.slice(pooled.tgt, 0, k, k + 1)));
    }
    out.push_back(std::move(g));
  }
  return out;
}

RetrievalEntry retrieval_entry(const std::string& pair, const std::vector<PairedEmbeddings>& groups) {
  RetrievalEntry e;
  e.pair = pair;
  std::size_t used = 0;
  for (const auto& g : groups) {
    if (g.src.empty()) continue;
    e.forward += retrieval_p1(g.src, g.tgt);
    e.backward += retrieval_p1(g.tgt, g.src);
    e.queries += g.src.size();
    ++used;
  }
  if (used > 0) {
    e.forward /= static_cast<double>(used);
    e.backward /= static_cast<double>(used);
  }
  e.average = (e.forward + e.backward) / 2.0;
  return e;
}

RetrievalReport sentence_retrieval(const Transformer& model, const Vocabulary& vocab, const ParallelCorpus& valid,
                                   RetrievalScope scope, std::size_t budget) {
  RetrievalReport r;
  r.granularity = Granularity::kSentence;
  r.scope = scope;
  for (const auto& [name, pairs] : valid.by_pair) {
    if (pairs.empty()) continue;
    std::vector<PairedEmbeddings> groups;
    if (scope == RetrievalScope::kFull) {
      groups.push_back(sentence_embeddings(model, vocab, pairs, budget));
    } else {
      for (const auto& batch : sequential_batches(pairs, budget)) {
        groups.push_back(sentence_embeddings(model, vocab, batch.pairs, budget));
      }
    }
    r.entries.push_back(retrieval_entry(name, groups));
  }
  return r;
}

RetrievalReport word_retrieval(const Transformer& model, const Vocabulary& vocab, const ParallelCorpus& valid,
                               std::size_t batch_tokens) {
  RetrievalReport r;
  r.granularity = Granularity::kWord;
  r.scope = RetrievalScope::kInBatch;
  for (const auto& [name, pairs] : valid.by_pair) {
    auto groups = word_embeddings(model, vocab, pairs, batch_tokens);
    if (groups.empty()) continue;
    r.entries.push_back(retrieval_entry(name, groups));
  }
  return r;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ConfigError("pearson: unequal lengths");
  if (xs.size() < 2) throw ConfigError("pearson: need at least 2 points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw UndefinedResult("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ConfigError("spearman: unequal lengths");
  const auto rx = average_ranks(xs), ry = average_ranks(ys);
  return pearson(rx, ry);
}

std::vector<Tokens> translate(const Transformer& model, const Vocabulary& vocab,
                              const std::vector<SentencePair>& pairs, std::size_t max_len) {
  std::vector<Tokens> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(vocab.decode(model.greedy_decode(source_input(p, vocab), max_len)));
  return out;
}

}  // namespace wcl
