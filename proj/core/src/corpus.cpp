#include "wcl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "wcl/error.hpp"
#include "wcl/utf8.hpp"

namespace wcl {

namespace {

// Portable draws from a 64-bit engine; std distributions differ between
// standard libraries and would break cross-platform determinism.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

void build_side(const std::vector<std::string>& words, const Vocabulary& vocab, std::vector<TokenId>& subwords,
                std::vector<WordRange>& spans) {
  subwords.clear();
  spans.clear();
  for (const auto& w : words) {
    auto ids = vocab.encode_word(w);
    WordRange r{subwords.size(), subwords.size() + ids.size()};
    subwords.insert(subwords.end(), ids.begin(), ids.end());
    spans.push_back(r);
  }
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

SentencePair SentencePair::reversed() const {
  SentencePair r;
  r.src_lang = tgt_lang;
  r.tgt_lang = src_lang;
  r.src_words = tgt_words;
  r.tgt_words = src_words;
  r.src_subwords = tgt_subwords;
  r.tgt_subwords = src_subwords;
  r.src_spans = tgt_spans;
  r.tgt_spans = src_spans;
  r.line = line;
  r.alignment.reserve(alignment.size());
  for (const auto& p : alignment) r.alignment.push_back({p.tgt, p.src});
  std::sort(r.alignment.begin(), r.alignment.end());
  return r;
}

bool spans_partition(const std::vector<WordRange>& spans, std::size_t subwords) {
  std::size_t next = 0;
  for (const auto& s : spans) {
    if (s.begin != next || s.empty()) return false;
    next = s.end;
  }
  return next == subwords;
}

std::optional<SentencePair> segment(std::string_view src_line, std::string_view tgt_line,
                                    const std::string& src_lang, const std::string& tgt_lang,
                                    const Vocabulary& vocab) {
  SentencePair p;
  p.src_lang = src_lang;
  p.tgt_lang = tgt_lang;
  p.src_words = split_words(src_line);
  p.tgt_words = split_words(tgt_line);
  if (p.src_words.empty() || p.tgt_words.empty()) return std::nullopt;
  build_side(p.src_words, vocab, p.src_subwords, p.src_spans);
  build_side(p.tgt_words, vocab, p.tgt_subwords, p.tgt_spans);
  return p;
}

BitextSpec BitextSpec::parse(std::string_view text) {
  auto last = text.rfind(':');
  if (last == std::string_view::npos || last == 0) {
    throw ConfigError("bitext must be written as prefix:src:tgt, got '" + std::string(text) + "'");
  }
  auto mid = text.rfind(':', last - 1);
  if (mid == std::string_view::npos) {
    throw ConfigError("bitext must be written as prefix:src:tgt, got '" + std::string(text) + "'");
  }
  BitextSpec spec{std::string(text.substr(0, mid)), std::string(text.substr(mid + 1, last - mid - 1)),
                  std::string(text.substr(last + 1))};
  if (spec.prefix.empty() || spec.src.empty() || spec.tgt.empty()) {
    throw ConfigError("bitext must be written as prefix:src:tgt, got '" + std::string(text) + "'");
  }
  return spec;
}

RawBitext read_bitext(const BitextSpec& spec) {
  RawBitext b{spec.src, spec.tgt, read_lines(spec.src_path()), read_lines(spec.tgt_path())};
  if (b.src_lines.size() != b.tgt_lines.size()) {
    throw ConfigError("line count mismatch: " + spec.src_path() + " has " + std::to_string(b.src_lines.size()) +
                      ", " + spec.tgt_path() + " has " + std::to_string(b.tgt_lines.size()));
  }
  return b;
}

void write_bitext(const BitextSpec& spec, const RawBitext& bitext) {
  std::ofstream src(spec.src_path()), tgt(spec.tgt_path());
  if (!src || !tgt) throw ConfigError("cannot write bitext '" + spec.prefix + "'");
  for (const auto& l : bitext.src_lines) src << l << '\n';
  for (const auto& l : bitext.tgt_lines) tgt << l << '\n';
}

std::size_t ParallelCorpus::size() const {
  std::size_t n = 0;
  for (const auto& [_, pairs] : by_pair) n += pairs.size();
  return n;
}

std::vector<SentencePair> segment_bitext(const RawBitext& bitext, const Vocabulary& vocab,
                                         const std::vector<std::vector<WordPair>>* alignments,
                                         std::size_t* skipped) {
  if (alignments && alignments->size() != bitext.size()) {
    throw ConfigError("alignment file has " + std::to_string(alignments->size()) + " lines, bitext has " +
                      std::to_string(bitext.size()));
  }
  std::vector<SentencePair> out;
  out.reserve(bitext.size());
  for (std::size_t i = 0; i < bitext.size(); ++i) {
    auto p = segment(bitext.src_lines[i], bitext.tgt_lines[i], bitext.src_lang, bitext.tgt_lang, vocab);
    if (!p) {
      if (skipped) ++*skipped;
      continue;
    }
    p->line = i;
    if (alignments) {
      for (const auto& wp : (*alignments)[i]) {
        if (wp.src.empty() || wp.tgt.empty() || wp.src.end > p->src_words.size() ||
            wp.tgt.end > p->tgt_words.size()) {
          throw ConfigError("alignment on line " + std::to_string(i + 1) + " is out of range for its sentence");
        }
      }
      p->alignment = (*alignments)[i];
    }
    out.push_back(std::move(*p));
  }
  return out;
}

Batch make_batch(std::vector<SentencePair> pairs) {
  Batch b;
  b.pairs = std::move(pairs);
  for (std::size_t i = 0; i < b.pairs.size(); ++i) {
    b.token_count += b.pairs[i].token_count();
    for (const auto& wp : b.pairs[i].alignment) b.alignments.entries.push_back({i, wp});
  }
  return b;
}

std::vector<double> sampling_probabilities(const std::vector<std::size_t>& sizes, double temperature) {
  if (!(temperature > 0)) throw ConfigError("sampling temperature must be positive");
  std::vector<double> logw(sizes.size(), -INFINITY);
  double mx = -INFINITY;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] == 0) continue;
    logw[i] = std::log(static_cast<double>(sizes[i])) / temperature;
    mx = std::max(mx, logw[i]);
  }
  if (!std::isfinite(mx)) throw ConfigError("all language pairs are empty");
  std::vector<double> p(sizes.size());
  double z = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) z += p[i] = std::exp(logw[i] - mx);
  for (auto& v : p) v /= z;
  return p;
}

BatchStream::BatchStream(const ParallelCorpus& corpus, BatchingOptions options)
    : options_(options), rng_(options.seed) {
  if (options_.budget == 0) throw ConfigError("batch token budget must be positive");
  std::vector<std::size_t> sizes;
  for (const auto& [name, pairs] : corpus.by_pair) {
    std::vector<const SentencePair*> pool;
    for (const auto& p : pairs) {
      if (p.token_count() > options_.budget) {
        ++dropped_;
      } else {
        pool.push_back(&p);
      }
    }
    if (pool.empty()) continue;
    names_.push_back(name);
    sizes.push_back(pool.size());
    pools_.push_back(std::move(pool));
  }
  if (pools_.empty()) throw ConfigError("no sentence pair fits the batch budget");
  probs_ = sampling_probabilities(sizes, options_.temperature);
  for (const auto& pool : pools_) {
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng_);
    orders_.push_back(std::move(order));
  }
  cursors_.assign(pools_.size(), 0);
}

void BatchStream::refill() {
  ++epoch_;
  std::size_t total = 0;
  for (const auto& pool : pools_) total += pool.size();

  std::vector<const SentencePair*> drawn;
  drawn.reserve(total);
  for (std::size_t n = 0; n < total; ++n) {
    double u = uniform01(rng_);
    std::size_t k = 0;
    while (k + 1 < probs_.size() && u >= probs_[k]) u -= probs_[k++];
    if (cursors_[k] == orders_[k].size()) {
      shuffle(orders_[k], rng_);
      cursors_[k] = 0;
    }
    drawn.push_back(pools_[k][orders_[k][cursors_[k]++]]);
  }
  std::stable_sort(drawn.begin(), drawn.end(),
                   [](const SentencePair* a, const SentencePair* b) { return a->token_count() < b->token_count(); });

  queue_.clear();
  queue_pos_ = 0;
  std::vector<const SentencePair*> current;
  std::size_t tokens = 0;
  for (const auto* p : drawn) {
    if (!current.empty() && tokens + p->token_count() > options_.budget) {
      queue_.push_back(std::move(current));
      current.clear();
      tokens = 0;
    }
    current.push_back(p);
    tokens += p->token_count();
  }
  if (!current.empty()) queue_.push_back(std::move(current));
  shuffle(queue_, rng_);
}

Batch BatchStream::next() {
  if (queue_pos_ == queue_.size()) refill();
  std::vector<SentencePair> pairs;
  for (const auto* p : queue_[queue_pos_]) pairs.push_back(*p);
  ++queue_pos_;
  return make_batch(std::move(pairs));
}

std::vector<Batch> sequential_batches(const std::vector<SentencePair>& pairs, std::size_t budget) {
  std::vector<Batch> out;
  std::vector<SentencePair> current;
  std::size_t tokens = 0;
  for (const auto& p : pairs) {
    if (!current.empty() && tokens + p.token_count() > budget) {
      out.push_back(make_batch(std::move(current)));
      current.clear();
      tokens = 0;
    }
    current.push_back(p);
    tokens += p.token_count();
  }
  if (!current.empty()) out.push_back(make_batch(std::move(current)));
  return out;
}

}  // namespace wcl
