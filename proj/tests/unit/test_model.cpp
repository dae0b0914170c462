#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "wcl/error.hpp"
#include "wcl/model.hpp"
#include "wcl/trainer.hpp"

using namespace wcl;

namespace {

struct Fixture {
  test::Toy toy = test::make_toy(30, 12, 7);
  std::vector<SentencePair> pairs = segment_bitext(toy.copy.bitext, toy.vocab, nullptr, nullptr);
  Transformer model{test::tiny_config(toy.vocab.size()), 11};

  std::vector<std::vector<TokenId>> inputs(std::size_t count) const {
    std::vector<std::vector<TokenId>> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(source_input(pairs[i], toy.vocab));
    return out;
  }
};

Tensor& param(Transformer& m, const std::string& name) {
  for (auto& [n, t] : m.parameters()) {
    if (n == name) return t;
  }
  throw std::runtime_error("no parameter " + name);
}

void fill(Tensor& t, Real v) {
  for (auto& x : t.mutable_values()) x = v;
}

std::vector<Real> row_of(const EncoderOutput& enc, std::size_t sentence, std::size_t pos) {
  const std::size_t d = enc.states.cols(), r = enc.offsets[sentence] + pos;
  auto v = enc.states.values().subspan(r * d, d);
  return {v.begin(), v.end()};
}

// Forces the decoder output to the direction of one embedding row.
void force_token(Transformer& m, TokenId token) {
  fill(param(m, "dec.final.gain"), 0);
  auto& embed = param(m, "embed");
  const std::size_t d = embed.cols();
  auto e = embed.mutable_values();
  for (std::size_t c = 0; c < d; ++c) e[token * d + c] *= 10;
  auto bias = param(m, "dec.final.bias").mutable_values();
  for (std::size_t c = 0; c < d; ++c) bias[c] = e[token * d + c];
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = test::tiny_config(10);
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = test::tiny_config(10);
  c.d_proj = c.d;
  EXPECT_THROW(c.validate(), ConfigError);
  c.d_proj = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelConfig, JsonRoundTrip) {
  ModelConfig c = test::tiny_config(42);
  c.max_positions = 77;
  nlohmann::json j = c;
  auto back = j.get<ModelConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(Encode, ShapeIsTokensByD) {
  Fixture f;
  Tape tape(false);
  RunContext ctx{&tape};
  auto in = f.inputs(3);
  auto enc = f.model.encode(ctx, in);
  std::size_t total = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    EXPECT_EQ(enc.lengths[i], in[i].size());
    EXPECT_EQ(enc.offsets[i], total);
    total += in[i].size();
  }
  EXPECT_EQ(enc.states.shape(), (Shape{total, f.model.config().d}));
}

TEST(Encode, EvalModeIsBitwiseDeterministic) {
  Fixture f;
  Tape a(false), b(false);
  RunContext ca{&a}, cb{&b};
  auto x = f.model.encode(ca, f.inputs(4)), y = f.model.encode(cb, f.inputs(4));
  for (std::size_t i = 0; i < x.states.numel(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(x.states.values()[i]), std::bit_cast<std::uint64_t>(y.states.values()[i]));
  }
}

TEST(Encode, NoLeakageAcrossSentences) {
  Fixture f;
  auto in = f.inputs(5);
  Tape tape(false);
  RunContext ctx{&tape};
  auto batched = f.model.encode(ctx, in);
  std::vector<std::vector<TokenId>> reversed(in.rbegin(), in.rend());
  auto flipped = f.model.encode(ctx, reversed);
  double worst = 0;
  for (std::size_t s = 0; s < in.size(); ++s) {
    auto single = f.model.encode(ctx, {in[s]});
    for (std::size_t p = 0; p < in[s].size(); ++p) {
      auto a = row_of(batched, s, p), b = row_of(single, 0, p), c = row_of(flipped, in.size() - 1 - s, p);
      for (std::size_t k = 0; k < a.size(); ++k) {
        worst = std::max({worst, std::abs(a[k] - b[k]), std::abs(a[k] - c[k])});
      }
    }
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(Encode, OverlongInputIsRejected) {
  Fixture f;
  Tape tape(false);
  RunContext ctx{&tape};
  std::vector<TokenId> longer(f.model.config().max_positions + 1, Vocabulary::kUnk);
  EXPECT_THROW(f.model.encode(ctx, {longer}), ContractViolation);
  EXPECT_THROW(f.model.encode(ctx, {}), ContractViolation);
}

TEST(DecodeLoss, UniformLogitsGiveLogV) {
  Fixture f;
  fill(param(f.model, "embed"), 0);
  Tape tape;
  RunContext ctx{&tape};
  auto enc = f.model.encode(ctx, f.inputs(3));
  std::vector<std::vector<TokenId>> targets;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    targets.push_back(f.pairs[i].tgt_subwords);
    tokens += targets.back().size() + 1;
  }
  auto loss = f.model.decode_loss(ctx, enc, targets, 0);
  EXPECT_NEAR(loss.item() / static_cast<double>(tokens), std::log(static_cast<double>(f.toy.vocab.size())), 1e-12);
}

TEST(DecodeLoss, FutureTokensDoNotAffectEarlierPositions) {
  Fixture f;
  Tape tape(false);
  RunContext ctx{&tape};
  auto enc = f.model.encode(ctx, f.inputs(1));
  std::vector<TokenId> a{Vocabulary::kBos, 5, 6, 7, 8}, b{Vocabulary::kBos, 5, 6, 9, 4};
  auto la = f.model.decoder_logits(ctx, enc, {a}), lb = f.model.decoder_logits(ctx, enc, {b});
  const std::size_t v = la.cols();
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < v; ++c) EXPECT_NEAR(la.at(r, c), lb.at(r, c), 1e-12) << "row " << r;
  }
  double moved = 0;
  for (std::size_t c = 0; c < v; ++c) moved = std::max(moved, std::abs(la.at(3, c) - lb.at(3, c)));
  EXPECT_GT(moved, 1e-6);
}

TEST(DecodeLoss, SmoothedLossStaysAboveTargetEntropy) {
  auto toy = test::make_toy(20, 8, 13);
  ParallelCorpus corpus;
  for (auto& p : segment_bitext(toy.copy.bitext, toy.vocab, nullptr, nullptr)) corpus.add(p);
  ModelConfig mc = test::tiny_config(toy.vocab.size());
  mc.d = 16;
  mc.d_ff = 32;
  Transformer model(mc, 3);
  TrainConfig tc;
  tc.lr = 5e-3;
  tc.warmup = 20;
  tc.budget = 200;
  Adam adam(tc, model.parameters().size());
  BatchStream stream(corpus, {tc.budget, 1.0, 5});
  std::mt19937_64 rng(1);
  for (std::size_t step = 1; step <= 300; ++step) train_step(model, adam, toy.vocab, stream.next(), tc, step, rng);

  const double eps = mc.label_smoothing, v = static_cast<double>(toy.vocab.size());
  const double on = 1 - eps + eps / v, off = eps / v;
  const double floor = -on * std::log(on) - (v - 1) * off * std::log(off);
  const auto& pairs = corpus.by_pair.begin()->second;
  double smoothed = 0, plain = 0;
  std::size_t tokens = 0;
  Tape tape(false);
  RunContext ctx{&tape};
  for (const auto& p : pairs) {
    auto enc = model.encode(ctx, {source_input(p, toy.vocab)});
    smoothed += model.decode_loss(ctx, enc, {p.tgt_subwords}, static_cast<Real>(eps)).item();
    plain += model.decode_loss(ctx, enc, {p.tgt_subwords}, 0).item();
    tokens += p.tgt_subwords.size() + 1;
  }
  const double per_token = smoothed / static_cast<double>(tokens);
  EXPECT_GE(per_token, floor);
  // A confident fitted model pays extra for the smoothing mass.
  EXPECT_LT(plain / static_cast<double>(tokens), per_token);
}

TEST(PoolSpan, Examples) {
  Fixture f;
  Tape tape(false);
  RunContext ctx{&tape};
  auto enc = f.model.encode(ctx, f.inputs(2));
  auto one = f.model.pool_span(tape, enc, 1, 2, 3);
  auto expect = row_of(enc, 1, 2);
  for (std::size_t k = 0; k < expect.size(); ++k) EXPECT_EQ(one.values()[k], expect[k]);
  auto two = f.model.pool_span(tape, enc, 1, 0, 2);
  auto r0 = row_of(enc, 1, 0), r1 = row_of(enc, 1, 1);
  for (std::size_t k = 0; k < r0.size(); ++k) EXPECT_NEAR(two.values()[k], (r0[k] + r1[k]) / 2, 1e-15);
  EXPECT_THROW(f.model.pool_span(tape, enc, 1, 2, 2), ContractViolation);
  EXPECT_THROW(f.model.pool_span(tape, enc, 0, 0, enc.lengths[0] + 1), ContractViolation);
  EXPECT_THROW(f.model.pool_span(tape, enc, 2, 0, 1), ContractViolation);
}

TEST(PoolSpan, ThreeToFiveAveragesTwoRows) {
  EncoderOutput enc;
  std::vector<Real> v;
  for (int r = 0; r < 6; ++r) {
    v.push_back(r);
    v.push_back(10.0 * r);
  }
  enc.states = Tensor::constant({6, 2}, v);
  enc.offsets = {0};
  enc.lengths = {6};
  Fixture f;
  Tape tape(false);
  auto x = f.model.pool_span(tape, enc, 0, 3, 5);
  EXPECT_DOUBLE_EQ(x.at(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(x.at(0, 1), 35.0);
  enc.states = Tensor::constant({6, 2}, std::vector<Real>(12, 0.25));
  auto same = f.model.pool_span(tape, enc, 0, 1, 6);
  EXPECT_DOUBLE_EQ(same.at(0, 0), 0.25);
}

TEST(PoolSpan, ConcatenatedEqualSpansAverageTheirPools) {
  Fixture f;
  Tape tape(false);
  RunContext ctx{&tape};
  auto in = f.inputs(8);
  auto enc = f.model.encode(ctx, in);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t s = rng() % in.size(), len = in[s].size();
    const std::size_t k = 1 + rng() % (len / 2), begin = rng() % (len - 2 * k + 1);
    auto whole = f.model.pool_span(tape, enc, s, begin, begin + 2 * k);
    auto a = f.model.pool_span(tape, enc, s, begin, begin + k), b = f.model.pool_span(tape, enc, s, begin + k, begin + 2 * k);
    for (std::size_t c = 0; c < whole.cols(); ++c) {
      EXPECT_NEAR(whole.values()[c], (a.values()[c] + b.values()[c]) / 2, 1e-14);
    }
  }
}

TEST(Project, IdentityAndSelectorTruncates) {
  Fixture f;
  const std::size_t d = f.model.config().d, dp = f.model.config().d_proj;
  auto& w1 = param(f.model, "head.w1");
  auto& w2 = param(f.model, "head.w2");
  ASSERT_EQ(w1.shape(), (Shape{d, d}));
  ASSERT_EQ(w2.shape(), (Shape{d, dp}));
  fill(w1, 0);
  fill(w2, 0);
  for (std::size_t i = 0; i < d; ++i) w1.mutable_values()[i * d + i] = 1;
  for (std::size_t i = 0; i < dp; ++i) w2.mutable_values()[i * dp + i] = 1;
  auto x = Tensor::constant({1, d}, test::random_values(d, 4, 0, 2));
  Tape tape(false);
  auto g = f.model.project(tape, x);
  ASSERT_EQ(g.shape(), (Shape{1, dp}));
  for (std::size_t i = 0; i < dp; ++i) EXPECT_EQ(g.values()[i], x.values()[i]);
}

TEST(Project, ZeroInputGivesZero) {
  Fixture f;
  Tape tape(false);
  auto g = f.model.project(tape, Tensor::zeros({1, f.model.config().d}));
  for (Real v : g.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(f.model.project(tape, Tensor::zeros({1, 3})), ContractViolation);
}

TEST(Project, CosineGradientWrtW1MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Fixture f;
    const std::size_t d = f.model.config().d;
    auto x = Tensor::constant({1, d}, test::random_values(d, seed * 2)), y = Tensor::constant({1, d}, test::random_values(d, seed * 2 + 1));
    std::vector<Tensor> in{param(f.model, "head.w1")};
    auto r = grad_check(
        [&](Tape& t) { return t.sum(t.cosine_similarity(f.model.project(t, x), f.model.project(t, y))); }, in);
    EXPECT_TRUE(r.passed) << "seed " << seed << ": " << r.max_rel_error;
  }
}

TEST(Checkpoint, ModelRoundTrip) {
  Fixture f;
  auto ckpt = f.model.to_checkpoint({{"note", 1}});
  auto back = Transformer::from_checkpoint(ckpt);
  ASSERT_EQ(back.parameters().size(), f.model.parameters().size());
  for (std::size_t p = 0; p < back.parameters().size(); ++p) {
    auto a = back.parameters()[p].second.values(), b = f.model.parameters()[p].second.values();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin())) << back.parameters()[p].first;
  }
  ModelConfig other = f.model.config();
  other.d_ff += 1;
  Transformer wrong(other, 1);
  EXPECT_THROW(wrong.load(ckpt), ConfigError);
}

TEST(GreedyDecode, EosFirstModelProducesNothing) {
  Fixture f;
  force_token(f.model, Vocabulary::kEos);
  EXPECT_TRUE(f.model.greedy_decode(f.inputs(1)[0], 10).empty());
}

TEST(GreedyDecode, MaxLenIsHonored) {
  Fixture f;
  force_token(f.model, 5);
  auto out = f.model.greedy_decode(f.inputs(1)[0], 7);
  EXPECT_EQ(out, std::vector<TokenId>(7, 5));
  EXPECT_TRUE(f.model.greedy_decode(f.inputs(1)[0], 0).empty());
}

TEST(GreedyDecode, CopyTaskModelReproducesInput) {
  // Target equals source, so a fitted model must learn to copy.
  auto words = make_words(6, 0, 17);
  RawBitext b{"xx", "yy", {}, {}};
  std::mt19937_64 rng(9);
  for (int i = 0; i < 40; ++i) {
    std::string line;
    const std::size_t n = 2 + rng() % 3;
    for (std::size_t k = 0; k < n; ++k) line += (k ? " " : "") + words[rng() % words.size()];
    b.src_lines.push_back(line);
    b.tgt_lines.push_back(line);
  }
  auto vocab = build_vocabulary({b}, 10);
  ParallelCorpus corpus;
  for (auto& p : segment_bitext(b, vocab, nullptr, nullptr)) corpus.add(p);
  ModelConfig mc = test::tiny_config(vocab.size());
  mc.d = 32;
  mc.heads = 4;
  mc.d_ff = 64;
  mc.d_proj = 8;
  Transformer model(mc, 1);
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.warmup = 50;
  tc.budget = 300;
  Adam adam(tc, model.parameters().size());
  BatchStream stream(corpus, {tc.budget, 1.0, 2});
  std::mt19937_64 drop(3);
  for (std::size_t step = 1; step <= 600; ++step) train_step(model, adam, vocab, stream.next(), tc, step, drop);

  std::size_t exact = 0;
  const auto& pairs = corpus.by_pair.begin()->second;
  for (const auto& p : pairs) exact += model.greedy_decode(source_input(p, vocab), 20) == p.tgt_subwords;
  EXPECT_GE(static_cast<double>(exact) / static_cast<double>(pairs.size()), 0.9);
}
