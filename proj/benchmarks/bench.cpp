#include <benchmark/benchmark.h>

#include <random>

#include "wcl/aligner.hpp"
#include "wcl/pipeline.hpp"
#include "wcl/synthetic.hpp"
#include "wcl/trainer.hpp"

using namespace wcl;

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Real> v(rows * cols);
  for (auto& x : v) x = static_cast<Real>(u(rng));
  return Tensor::parameter({rows, cols}, v);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_tensor(n, n, 1), b = random_tensor(n, n, 2);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(tape.matmul(a, b).at(0, 0));
  }
  state.counters["flops"] = benchmark::Counter(static_cast<double>(2 * n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

// Forward and backward of one causal attention over a batch of 16
// sentences of the given length, 4 heads of width 16.
void BM_AttentionForwardBackward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const std::size_t segs = 16, d = 64;
  auto q = random_tensor(segs * len, d, 3), k = random_tensor(segs * len, d, 4), v = random_tensor(segs * len, d, 5);
  std::vector<std::size_t> off(segs), lens(segs, len);
  for (std::size_t s = 0; s < segs; ++s) off[s] = s * len;
  for (auto _ : state) {
    Tape tape;
    auto out = tape.attention(q, k, v, 4, off, lens, off, lens, true);
    tape.backward(tape.sum(out));
  }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(8)->Arg(32);

struct ToyTask {
  Vocabulary vocab;
  ParallelCorpus corpus;
  std::vector<WordSentencePair> words;
};

const ToyTask& toy() {
  static const ToyTask t = [] {
    auto xx = make_words(50, 0, 1), yy = make_words(50, 1, 2);
    auto syn = generate_corpus({xx, yy}, "xx", "yy", {2000, 3, 8, WordOrder::kMonotone, 3});
    ToyTask out;
    out.vocab = build_vocabulary({syn.bitext}, 200);
    auto pairs = extract_w2w(syn.bitext, {}, 0).pairs;
    out.corpus = build_corpus({{syn.bitext, pairs}}, out.vocab, false);
    out.words = word_pairs_of(syn.bitext);
    return out;
  }();
  return t;
}

// One optimizer step on a 512-token batch with the toy model.
void BM_TrainStep(benchmark::State& state) {
  const auto& t = toy();
  ModelConfig mc;
  mc.d = 32;
  mc.d_ff = 128;
  mc.d_proj = 8;
  mc.layers_enc = mc.layers_dec = 1;
  mc.vocab_size = t.vocab.size();
  Transformer model(mc, 7);
  TrainConfig tc;
  tc.mode = state.range(0) == 0 ? ObjectiveMode::kNmtOnly : ObjectiveMode::kW2w;
  auto batches = sequential_batches(t.corpus.by_pair.begin()->second, 512);
  Adam adam(tc, model.parameters().size());
  std::mt19937_64 rng(9);
  std::size_t step = 1;
  for (auto _ : state) {
    auto b = train_step(model, adam, t.vocab, batches[step % batches.size()], tc, step, rng);
    benchmark::DoNotOptimize(b.l_total);
    ++step;
  }
  state.SetLabel(tc.mode == ObjectiveMode::kNmtOnly ? "nmt_only" : "w2w");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// One EM iteration over 2000 sentence pairs.
void BM_EmIteration(benchmark::State& state) {
  const auto& t = toy();
  AlignerOptions o;
  o.iterations = 1;
  for (auto _ : state) {
    auto r = em_train(t.words, o);
    benchmark::DoNotOptimize(r.log_likelihood.back());
  }
}
BENCHMARK(BM_EmIteration)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
