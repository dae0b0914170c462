#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "wcl/autodiff.hpp"
#include "wcl/model.hpp"
#include "wcl/pipeline.hpp"
#include "wcl/synthetic.hpp"

namespace wcl::test {

inline std::vector<Real> random_values(std::size_t n, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(u(rng));
  return v;
}

inline Tensor random_param(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo = -1, double hi = 1) {
  return Tensor::parameter({rows, cols}, random_values(rows * cols, seed, lo, hi));
}

struct Toy {
  SyntheticCorpus copy, rev;
  Vocabulary vocab;
};

// Two small dictionary tasks sharing a source language.
inline Toy make_toy(std::size_t pairs, std::size_t vocab_words, std::uint64_t seed, std::size_t merges = 20) {
  auto xx = make_words(vocab_words, 0, seed);
  auto yy = make_words(vocab_words, 1, seed + 1);
  auto zz = make_words(vocab_words, 2, seed + 2);
  Toy t;
  t.copy = generate_corpus({xx, yy}, "xx", "yy", {pairs, 2, 5, WordOrder::kMonotone, seed + 3});
  t.rev = generate_corpus({xx, zz}, "xx", "zz", {pairs, 2, 5, WordOrder::kReversed, seed + 4});
  t.vocab = build_vocabulary({t.copy.bitext, t.rev.bitext}, merges);
  return t;
}

inline ModelConfig tiny_config(std::size_t vocab_size) {
  ModelConfig c;
  c.layers_enc = 1;
  c.layers_dec = 1;
  c.d = 8;
  c.heads = 2;
  c.d_ff = 12;
  c.d_proj = 4;
  c.vocab_size = vocab_size;
  c.dropout_nmt = 0;
  c.dropout_contrastive = 0;
  return c;
}

}  // namespace wcl::test
