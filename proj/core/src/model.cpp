#include "wcl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wcl/error.hpp"

namespace wcl {

namespace {

double uniform_pm(std::mt19937_64& rng, double limit) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2 * u - 1) * limit;
}

std::vector<Real> xavier(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<Real> v(in * out);
  for (auto& x : v) x = static_cast<Real>(uniform_pm(rng, limit));
  return v;
}

Tensor sinusoid_table(std::size_t positions, std::size_t d) {
  std::vector<Real> v(positions * d);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      const double angle = static_cast<double>(p) * rate;
      v[p * d + i] = static_cast<Real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor::constant({positions, d}, std::move(v));
}

Tensor maybe_dropout(RunContext& ctx, const Tensor& x) {
  if (ctx.dropout <= 0 || !ctx.rng) return x;
  return ctx.tape->dropout(x, ctx.dropout, *ctx.rng);
}

}  // namespace

void ModelConfig::validate() const {
  if (d == 0 || heads == 0 || d % heads != 0) throw ConfigError("model: d must be a positive multiple of heads");
  if (d_proj == 0 || d_proj >= d) throw ConfigError("model: projection size must satisfy 0 < d_proj < d");
  if (layers_enc == 0 || layers_dec == 0) throw ConfigError("model: need at least one encoder and decoder layer");
  if (d_ff == 0) throw ConfigError("model: d_ff must be positive");
  if (vocab_size == 0) throw ConfigError("model: vocab_size must be positive");
  if (max_positions < 2) throw ConfigError("model: max_positions too small");
  for (double p : {dropout_nmt, dropout_contrastive}) {
    if (!(p >= 0 && p < 1)) throw ConfigError("model: dropout must lie in [0, 1)");
  }
  if (!(label_smoothing >= 0 && label_smoothing < 1)) throw ConfigError("model: label smoothing must lie in [0, 1)");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"layers_enc", c.layers_enc},   {"layers_dec", c.layers_dec},
       {"d", c.d},                     {"heads", c.heads},
       {"d_ff", c.d_ff},               {"d_proj", c.d_proj},
       {"dropout_nmt", c.dropout_nmt}, {"dropout_contrastive", c.dropout_contrastive},
       {"vocab_size", c.vocab_size},   {"max_positions", c.max_positions},
       {"label_smoothing", c.label_smoothing}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.layers_enc = j.value("layers_enc", d.layers_enc);
  c.layers_dec = j.value("layers_dec", d.layers_dec);
  c.d = j.value("d", d.d);
  c.heads = j.value("heads", d.heads);
  c.d_ff = j.value("d_ff", d.d_ff);
  c.d_proj = j.value("d_proj", d.d_proj);
  c.dropout_nmt = j.value("dropout_nmt", d.dropout_nmt);
  c.dropout_contrastive = j.value("dropout_contrastive", d.dropout_contrastive);
  c.vocab_size = j.value("vocab_size", d.vocab_size);
  c.max_positions = j.value("max_positions", d.max_positions);
  c.label_smoothing = j.value("label_smoothing", d.label_smoothing);
}

std::vector<TokenId> source_input(const SentencePair& pair, const Vocabulary& vocab) {
  std::vector<TokenId> ids{vocab.lang_tag(pair.tgt_lang)};
  ids.insert(ids.end(), pair.src_subwords.begin(), pair.src_subwords.end());
  ids.push_back(Vocabulary::kEos);
  return ids;
}

std::vector<TokenId> target_as_source_input(const SentencePair& pair, const Vocabulary& vocab) {
  std::vector<TokenId> ids{vocab.lang_tag(pair.tgt_lang)};
  ids.insert(ids.end(), pair.tgt_subwords.begin(), pair.tgt_subwords.end());
  ids.push_back(Vocabulary::kEos);
  return ids;
}

Transformer::Transformer(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.d;
  {
    const double limit = std::sqrt(3.0 / static_cast<double>(d));
    std::vector<Real> e(config_.vocab_size * d);
    for (auto& x : e) x = static_cast<Real>(uniform_pm(rng, limit));
    add_param("embed", {config_.vocab_size, d}, std::move(e));
  }
  for (std::size_t l = 0; l < config_.layers_enc; ++l) {
    const std::string p = "enc." + std::to_string(l) + ".";
    make_norm(p + "ln1");
    make_attention(p + "self", rng);
    make_norm(p + "ln2");
    make_linear(p + "ff1", d, config_.d_ff, rng);
    make_linear(p + "ff2", config_.d_ff, d, rng);
  }
  make_norm("enc.final");
  for (std::size_t l = 0; l < config_.layers_dec; ++l) {
    const std::string p = "dec." + std::to_string(l) + ".";
    make_norm(p + "ln1");
    make_attention(p + "self", rng);
    make_norm(p + "ln2");
    make_attention(p + "cross", rng);
    make_norm(p + "ln3");
    make_linear(p + "ff1", d, config_.d_ff, rng);
    make_linear(p + "ff2", config_.d_ff, d, rng);
  }
  make_norm("dec.final");
  add_param("head.w1", {d, d}, xavier(d, d, rng));
  add_param("head.w2", {d, config_.d_proj}, xavier(d, config_.d_proj, rng));
  positions_ = sinusoid_table(config_.max_positions, d);
  rebind();
}

Tensor& Transformer::add_param(const std::string& name, Shape shape, std::vector<Real> values) {
  params_.emplace_back(name, Tensor::parameter(shape, std::move(values)));
  return params_.back().second;
}

Transformer::Linear Transformer::make_linear(const std::string& name, std::size_t in, std::size_t out,
                                             std::mt19937_64& rng) {
  add_param(name + ".w", {in, out}, xavier(in, out, rng));
  add_param(name + ".b", {1, out}, std::vector<Real>(out, Real(0)));
  return {};
}

Transformer::Norm Transformer::make_norm(const std::string& name) {
  add_param(name + ".gain", {1, config_.d}, std::vector<Real>(config_.d, Real(1)));
  add_param(name + ".bias", {1, config_.d}, std::vector<Real>(config_.d, Real(0)));
  return {};
}

Transformer::Attention Transformer::make_attention(const std::string& name, std::mt19937_64& rng) {
  for (const char* part : {".q", ".k", ".v", ".o"}) make_linear(name + part, config_.d, config_.d, rng);
  return {};
}

const Tensor& Transformer::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw ContractViolation("no parameter named '" + name + "'");
}

// Points the layer structs at the tensors in params_ (by name).
void Transformer::rebind() {
  auto get = [this](const std::string& n) { return parameter(n); };
  auto lin = [&](const std::string& n) { return Linear{get(n + ".w"), get(n + ".b")}; };
  auto nrm = [&](const std::string& n) { return Norm{get(n + ".gain"), get(n + ".bias")}; };
  auto att = [&](const std::string& n) { return Attention{lin(n + ".q"), lin(n + ".k"), lin(n + ".v"), lin(n + ".o")}; };
  embedding_ = get("embed");
  enc_.clear();
  dec_.clear();
  for (std::size_t l = 0; l < config_.layers_enc; ++l) {
    const std::string p = "enc." + std::to_string(l) + ".";
    enc_.push_back({nrm(p + "ln1"), nrm(p + "ln2"), att(p + "self"), lin(p + "ff1"), lin(p + "ff2")});
  }
  for (std::size_t l = 0; l < config_.layers_dec; ++l) {
    const std::string p = "dec." + std::to_string(l) + ".";
    dec_.push_back({nrm(p + "ln1"), nrm(p + "ln2"), nrm(p + "ln3"), att(p + "self"), att(p + "cross"),
                    lin(p + "ff1"), lin(p + "ff2")});
  }
  enc_final_ = nrm("enc.final");
  dec_final_ = nrm("dec.final");
}

void Transformer::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

Checkpoint Transformer::to_checkpoint(nlohmann::json meta) const {
  Checkpoint ckpt;
  ckpt.meta = std::move(meta);
  ckpt.meta["model"] = config_;
  for (const auto& [name, t] : params_) {
    ckpt.tensors.push_back({name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())});
  }
  return ckpt;
}

void Transformer::load(const Checkpoint& ckpt) {
  for (auto& [name, t] : params_) {
    const auto* e = ckpt.find(name);
    if (!e) throw ConfigError("checkpoint lacks parameter '" + name + "'");
    if (!(e->shape == t.shape())) {
      throw ConfigError("checkpoint parameter '" + name + "' has shape " + e->shape.str() + ", model expects " +
                        t.shape().str());
    }
    auto dst = t.mutable_values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(e->values[i]);
  }
}

Transformer Transformer::from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.meta.contains("model")) throw ConfigError("checkpoint has no model configuration");
  Transformer t(ckpt.meta["model"].get<ModelConfig>(), 0);
  t.load(ckpt);
  return t;
}

Tensor Transformer::linear(Tape& tape, const Tensor& x, const Linear& l) const {
  return tape.add(tape.matmul(x, l.w), l.b);
}

Tensor Transformer::norm(Tape& tape, const Tensor& x, const Norm& n) const {
  return tape.layer_norm(x, n.gain, n.bias);
}

Tensor Transformer::embed(RunContext& ctx, const std::vector<std::vector<TokenId>>& seqs) const {
  Tape& tape = *ctx.tape;
  std::vector<TokenId> ids;
  std::vector<Real> pos;
  const std::size_t d = config_.d;
  for (const auto& s : seqs) {
    if (s.size() > config_.max_positions) {
      throw ContractViolation("input of " + std::to_string(s.size()) + " tokens exceeds max_positions " +
                              std::to_string(config_.max_positions));
    }
    ids.insert(ids.end(), s.begin(), s.end());
    for (std::size_t p = 0; p < s.size(); ++p) {
      auto row = positions_.values().subspan(p * d, d);
      pos.insert(pos.end(), row.begin(), row.end());
    }
  }
  Tensor x = tape.scale(tape.embedding_lookup(embedding_, ids), static_cast<Real>(std::sqrt(static_cast<double>(d))));
  x = tape.add(x, Tensor::constant({ids.size(), d}, std::move(pos)));
  return maybe_dropout(ctx, x);
}

Tensor Transformer::attention(RunContext& ctx, const Attention& a, const Tensor& xq, const Tensor& xkv,
                              const std::vector<std::size_t>& q_off, const std::vector<std::size_t>& q_len,
                              const std::vector<std::size_t>& k_off, const std::vector<std::size_t>& k_len,
                              bool causal) const {
  Tape& tape = *ctx.tape;
  Tensor q = linear(tape, xq, a.q), k = linear(tape, xkv, a.k), v = linear(tape, xkv, a.v);
  Tensor out = tape.attention(q, k, v, config_.heads, q_off, q_len, k_off, k_len, causal);
  return maybe_dropout(ctx, linear(tape, out, a.o));
}

Tensor Transformer::feed_forward(RunContext& ctx, const Tensor& x, const Linear& ff1, const Linear& ff2) const {
  Tape& tape = *ctx.tape;
  return maybe_dropout(ctx, linear(tape, tape.relu(linear(tape, x, ff1)), ff2));
}

EncoderOutput Transformer::encode(RunContext& ctx, const std::vector<std::vector<TokenId>>& inputs) const {
  if (inputs.empty()) throw ContractViolation("encode: no sentences");
  Tape& tape = *ctx.tape;
  EncoderOutput out;
  std::size_t off = 0;
  for (const auto& s : inputs) {
    if (s.empty()) throw ContractViolation("encode: empty sentence");
    out.offsets.push_back(off);
    out.lengths.push_back(s.size());
    off += s.size();
  }
  Tensor x = embed(ctx, inputs);
  for (const auto& layer : enc_) {
    Tensor h = norm(tape, x, layer.ln1);
    x = tape.add(x, attention(ctx, layer.self, h, h, out.offsets, out.lengths, out.offsets, out.lengths, false));
    x = tape.add(x, feed_forward(ctx, norm(tape, x, layer.ln2), layer.ff1, layer.ff2));
  }
  out.states = norm(tape, x, enc_final_);
  return out;
}

Tensor Transformer::decoder_logits(RunContext& ctx, const EncoderOutput& enc,
                                   const std::vector<std::vector<TokenId>>& decoder_inputs) const {
  if (decoder_inputs.size() != enc.offsets.size()) {
    throw ContractViolation("decoder: " + std::to_string(decoder_inputs.size()) + " inputs for " +
                            std::to_string(enc.offsets.size()) + " encoded sentences");
  }
  Tape& tape = *ctx.tape;
  std::vector<std::size_t> off, len;
  std::size_t o = 0;
  for (const auto& s : decoder_inputs) {
    off.push_back(o);
    len.push_back(s.size());
    o += s.size();
  }
  Tensor x = embed(ctx, decoder_inputs);
  for (const auto& layer : dec_) {
    Tensor h = norm(tape, x, layer.ln1);
    x = tape.add(x, attention(ctx, layer.self, h, h, off, len, off, len, true));
    h = norm(tape, x, layer.ln2);
    x = tape.add(x, attention(ctx, layer.cross, h, enc.states, off, len, enc.offsets, enc.lengths, false));
    x = tape.add(x, feed_forward(ctx, norm(tape, x, layer.ln3), layer.ff1, layer.ff2));
  }
  return tape.matmul(norm(tape, x, dec_final_), embedding_, false, true);
}

Tensor Transformer::decode_loss(RunContext& ctx, const EncoderOutput& enc,
                                const std::vector<std::vector<TokenId>>& targets, Real smoothing) const {
  std::vector<std::vector<TokenId>> inputs;
  std::vector<TokenId> gold;
  for (const auto& t : targets) {
    std::vector<TokenId> in{Vocabulary::kBos};
    in.insert(in.end(), t.begin(), t.end());
    inputs.push_back(std::move(in));
    gold.insert(gold.end(), t.begin(), t.end());
    gold.push_back(Vocabulary::kEos);
  }
  Tensor logits = decoder_logits(ctx, enc, inputs);
  return ctx.tape->cross_entropy_with_label_smoothing(logits, gold, smoothing);
}

Tensor Transformer::pool_span(Tape& tape, const EncoderOutput& enc, std::size_t sentence, std::size_t begin,
                              std::size_t end) const {
  if (sentence >= enc.offsets.size()) throw ContractViolation("pool_span: no sentence " + std::to_string(sentence));
  if (begin >= end || end > enc.lengths[sentence]) {
    throw ContractViolation("pool_span: span [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") invalid for sentence " + std::to_string(sentence) + " of length " +
                            std::to_string(enc.lengths[sentence]));
  }
  const std::size_t o = enc.offsets[sentence];
  return tape.mean(tape.slice(enc.states, 0, o + begin, o + end), 0);
}

Tensor Transformer::pool_sentence(Tape& tape, const EncoderOutput& enc, std::size_t sentence) const {
  return pool_span(tape, enc, sentence, 0, enc.lengths.at(sentence));
}

Tensor Transformer::project(Tape& tape, const Tensor& x) const {
  if (x.cols() != config_.d) {
    throw ContractViolation("project: input width " + std::to_string(x.cols()) + " != d " + std::to_string(config_.d));
  }
  return tape.matmul(tape.relu(tape.matmul(x, head_w1())), head_w2());
}

std::vector<TokenId> Transformer::greedy_decode(const std::vector<TokenId>& source, std::size_t max_len) const {
  Tape tape(false);
  RunContext ctx{&tape};
  EncoderOutput enc = encode(ctx, {source});
  std::vector<TokenId> out;
  std::vector<TokenId> input{Vocabulary::kBos};
  const std::size_t cap = std::min(max_len, config_.max_positions - 1);
  while (out.size() < cap) {
    Tensor logits = decoder_logits(ctx, enc, {input});
    const std::size_t v = logits.cols();
    auto last = logits.values().subspan((logits.rows() - 1) * v, v);
    const auto best = static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin());
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
    input.push_back(best);
  }
  return out;
}

}  // namespace wcl
