#include "wcl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "wcl/error.hpp"
#include "wcl/evalx.hpp"

namespace wcl {

namespace {

std::vector<std::vector<TokenId>> source_inputs(const Batch& batch, const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(batch.size());
  for (const auto& p : batch.pairs) out.push_back(source_input(p, vocab));
  return out;
}

std::vector<std::vector<TokenId>> target_inputs(const Batch& batch, const Vocabulary& vocab, std::size_t* tokens) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(batch.size());
  for (const auto& p : batch.pairs) {
    out.push_back(target_as_source_input(p, vocab));
    if (tokens) *tokens += out.back().size();
  }
  return out;
}

std::vector<std::vector<TokenId>> targets_of(const Batch& batch) {
  std::vector<std::vector<TokenId>> out;
  out.reserve(batch.size());
  for (const auto& p : batch.pairs) out.push_back(p.tgt_subwords);
  return out;
}

// Builds the full loss graph for one batch on ctx's tape.
struct LossGraph {
  Tensor total;
  LossBreakdown breakdown;
};

LossGraph build_loss(const Transformer& model, const Vocabulary& vocab, const Batch& batch, const TrainConfig& config,
                     RunContext& ctx) {
  Tape& tape = *ctx.tape;
  EncoderOutput enc = model.encode(ctx, source_inputs(batch, vocab));
  Tensor l_nmt = model.decode_loss(ctx, enc, targets_of(batch), static_cast<Real>(model.config().label_smoothing));
  Tensor l_align = Tensor::scalar(0);
  std::size_t n = 0, aux = 0;
  if (config.mode != ObjectiveMode::kNmtOnly && config.weight > 0) {
    const Real t = static_cast<Real>(config.temperature);
    if (is_word_mode(config.mode)) {
      n = batch.alignments.size();
      if (n > 0) {
        EncoderOutput tgt = model.encode(ctx, target_inputs(batch, vocab, &aux));
        RepPair reps = gather_reps(tape, model, batch, enc, tgt);
        l_align = word_contrastive_loss(tape, reps.src, reps.tgt, t);
      }
    } else {
      n = batch.size();
      EncoderOutput tgt = model.encode(ctx, target_inputs(batch, vocab, &aux));
      std::vector<Tensor> src_rows, tgt_rows;
      for (std::size_t s = 0; s < batch.size(); ++s) {
        src_rows.push_back(pool_subwords(tape, model, enc, s, batch.pairs[s].src_subwords.size()));
        tgt_rows.push_back(pool_subwords(tape, model, tgt, s, batch.pairs[s].tgt_subwords.size()));
      }
      l_align = sentence_contrastive_loss(tape, model.project(tape, tape.concat(src_rows, 0)),
                                          model.project(tape, tape.concat(tgt_rows, 0)), t);
    }
  }
  LossGraph g;
  g.total = combine(tape, l_nmt, l_align, batch.size(), n, batch.token_count, config.weight);
  g.breakdown = combine(l_nmt.item(), l_align.item(), batch.size(), n, batch.token_count, config.weight,
                        config.temperature);
  g.breakdown.aux_tokens = aux;
  return g;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string to_string(ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::kNmtOnly: return "nmt_only";
    case ObjectiveMode::kW2w: return "w2w";
    case ObjectiveMode::kFa: return "fa";
    case ObjectiveMode::kSent: return "sent";
  }
  return "?";
}

ObjectiveMode parse_mode(const std::string& text) {
  if (text == "nmt_only") return ObjectiveMode::kNmtOnly;
  if (text == "w2w") return ObjectiveMode::kW2w;
  if (text == "fa") return ObjectiveMode::kFa;
  if (text == "sent") return ObjectiveMode::kSent;
  throw ConfigError("unknown objective mode '" + text + "' (expected nmt_only, w2w, fa or sent)");
}

bool is_word_mode(ObjectiveMode mode) { return mode == ObjectiveMode::kW2w || mode == ObjectiveMode::kFa; }

void TrainConfig::validate() const {
  if (patience < 1) throw ConfigError("trainer: patience must be at least 1");
  if (validate_every < 1) throw ConfigError("trainer: validate_every must be at least 1");
  if (!(lr > 0)) throw ConfigError("trainer: lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("trainer: betas must lie in [0, 1)");
  if (!(adam_eps > 0)) throw ConfigError("trainer: adam_eps must be positive");
  if (!(clip_norm > 0)) throw ConfigError("trainer: clip_norm must be positive");
  if (!(weight >= 0)) throw ConfigError("trainer: weight must be nonnegative");
  if (!(temperature > 0)) throw ConfigError("trainer: temperature must be positive");
  if (!(sampling_temperature > 0)) throw ConfigError("trainer: sampling_temperature must be positive");
  if (budget == 0 || valid_budget == 0 || probe_budget == 0) throw ConfigError("trainer: budgets must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"beta1", c.beta1},
       {"beta2", c.beta2},
       {"adam_eps", c.adam_eps},
       {"lr", c.lr},
       {"warmup", c.warmup},
       {"max_steps", c.max_steps},
       {"validate_every", c.validate_every},
       {"patience", c.patience},
       {"clip_norm", c.clip_norm},
       {"mode", to_string(c.mode)},
       {"weight", c.weight},
       {"temperature", c.temperature},
       {"budget", c.budget},
       {"sampling_temperature", c.sampling_temperature},
       {"valid_budget", c.valid_budget},
       {"probe_budget", c.probe_budget}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.lr = j.value("lr", d.lr);
  c.warmup = j.value("warmup", d.warmup);
  c.max_steps = j.value("max_steps", d.max_steps);
  c.validate_every = j.value("validate_every", d.validate_every);
  c.patience = j.value("patience", d.patience);
  c.clip_norm = j.value("clip_norm", d.clip_norm);
  c.mode = parse_mode(j.value("mode", to_string(d.mode)));
  c.weight = j.value("weight", d.weight);
  c.temperature = j.value("temperature", d.temperature);
  c.budget = j.value("budget", d.budget);
  c.sampling_temperature = j.value("sampling_temperature", d.sampling_temperature);
  c.valid_budget = j.value("valid_budget", d.valid_budget);
  c.probe_budget = j.value("probe_budget", d.probe_budget);
}

double learning_rate(const TrainConfig& config, std::size_t step) {
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  if (config.warmup == 0) return config.lr;
  const double w = static_cast<double>(config.warmup);
  return config.lr * std::min(s / w, std::sqrt(w / s));
}

Adam::Adam(const TrainConfig& config, std::size_t num_params)
    : beta1_(config.beta1), beta2_(config.beta2), eps_(config.adam_eps), m_(num_params), v_(num_params) {}

void Adam::update(std::vector<std::pair<std::string, Tensor>>& params, double lr) {
  if (params.size() != m_.size()) throw ContractViolation("optimizer was built for a different parameter list");
  ++t_;
  const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = params[p].second;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto x = t.mutable_values();
    auto& m = m_[p];
    auto& v = v_[p];
    if (m.empty()) {
      m.assign(x.size(), Real(0));
      v.assign(x.size(), Real(0));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = static_cast<Real>(beta1_ * m[i] + (1 - beta1_) * g[i]);
      v[i] = static_cast<Real>(beta2_ * v[i] + (1 - beta2_) * g[i] * g[i]);
      const double mh = m[i] / c1, vh = v[i] / c2;
      x[i] = static_cast<Real>(x[i] - lr * mh / (std::sqrt(vh) + eps_));
    }
  }
}

double clip_gradients(std::vector<std::pair<std::string, Tensor>>& params, double max_norm) {
  double sq = 0;
  for (auto& [_, t] : params) {
    if (!t.has_grad()) continue;
    for (Real g : t.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (std::isfinite(norm) && norm > max_norm) {
    const Real s = static_cast<Real>(max_norm / norm);
    for (auto& [_, t] : params) {
      if (!t.has_grad()) continue;
      for (Real& g : t.mutable_grad()) g *= s;
    }
  }
  return norm;
}

LossBreakdown compute_gradients(Transformer& model, const Vocabulary& vocab, const Batch& batch,
                                const TrainConfig& config, std::mt19937_64* dropout_rng) {
  if (batch.size() == 0) throw ContractViolation("empty batch");
  model.zero_grad();
  Tape tape;
  const bool contrastive = config.mode != ObjectiveMode::kNmtOnly && config.weight > 0;
  const auto& mc = model.config();
  RunContext ctx{&tape, static_cast<Real>(contrastive ? mc.dropout_contrastive : mc.dropout_nmt), dropout_rng};
  LossGraph g = build_loss(model, vocab, batch, config, ctx);
  tape.backward(g.total);
  return g.breakdown;
}

LossBreakdown train_step(Transformer& model, Adam& optimizer, const Vocabulary& vocab, const Batch& batch,
                         const TrainConfig& config, std::size_t step, std::mt19937_64& dropout_rng) {
  LossBreakdown b = compute_gradients(model, vocab, batch, config, &dropout_rng);
  if (!std::isfinite(b.l_total)) {
    throw NumericalDivergence("non-finite loss at step " + std::to_string(step));
  }
  const double norm = clip_gradients(model.parameters(), config.clip_norm);
  if (!std::isfinite(norm)) throw NumericalDivergence("non-finite gradient norm at step " + std::to_string(step));
  optimizer.update(model.parameters(), learning_rate(config, step));
  return b;
}

ValidationResult validate(const Transformer& model, const Vocabulary& vocab, const std::vector<SentencePair>& pairs,
                          const TrainConfig& config) {
  ValidationResult r;
  if (pairs.empty()) return r;
  double nmt = 0, combined = 0;
  for (const auto& batch : sequential_batches(pairs, config.valid_budget)) {
    Tape tape(false);
    RunContext ctx{&tape};
    LossGraph g = build_loss(model, vocab, batch, config, ctx);
    nmt += g.breakdown.l_nmt;
    combined += g.breakdown.l_total * static_cast<double>(batch.size());
    for (const auto& p : batch.pairs) r.tokens += p.tgt_subwords.size() + 1;
    r.sentences += batch.size();
  }
  r.nmt_loss = nmt / static_cast<double>(r.tokens);
  r.combined_loss = combined / static_cast<double>(r.sentences);
  return r;
}

nlohmann::json TrainLogRecord::to_json() const {
  return {{"step", step},
          {"last", last.to_json()},
          {"train_loss_mean", train_loss_mean},
          {"valid_nmt_loss", valid_nmt_loss},
          {"valid_combined_loss", valid_combined_loss},
          {"sentence_p1", sentence_p1},
          {"word_p1", word_p1},
          {"improved", improved}};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ (stream * 0xd1342543de82ef95ULL));
}

TrainResult train(Transformer& model, const Vocabulary& vocab, const ParallelCorpus& corpus,
                  const ParallelCorpus& valid, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (corpus.size() == 0) throw ConfigError("training corpus is empty");
  if (valid.size() == 0) throw ConfigError("validation corpus is empty");
  std::vector<SentencePair> valid_pairs;
  bool valid_aligned = false;
  for (const auto& [_, ps] : valid.by_pair) {
    for (const auto& p : ps) {
      valid_aligned = valid_aligned || !p.alignment.empty();
      valid_pairs.push_back(p);
    }
  }

  BatchStream stream(corpus, {config.budget, config.sampling_temperature, derive_seed(config.seed, 1)});
  std::mt19937_64 dropout_rng(derive_seed(config.seed, 2));
  Adam adam(config, model.parameters().size());
  TrainResult result;
  result.dropped_pairs = stream.dropped();

  auto clock = std::chrono::steady_clock::now();
  auto make_record = [&](std::size_t step, const LossBreakdown& last, double mean) {
    TrainLogRecord rec;
    rec.step = step;
    rec.last = last;
    rec.train_loss_mean = mean;
    ValidationResult v = validate(model, vocab, valid_pairs, config);
    rec.valid_nmt_loss = v.nmt_loss;
    rec.valid_combined_loss = v.combined_loss;
    for (const auto& e : sentence_retrieval(model, vocab, valid, RetrievalScope::kInBatch, config.probe_budget).entries) {
      rec.sentence_p1[e.pair] = e.average;
    }
    if (valid_aligned) {
      for (const auto& e : word_retrieval(model, vocab, valid, config.probe_budget).entries) rec.word_p1[e.pair] = e.average;
    }
    return rec;
  };

  std::size_t bad = 0;
  auto accept = [&](TrainLogRecord rec) {
    if (!std::isfinite(rec.valid_nmt_loss)) {
      result.diverged = true;
      result.divergence_message = "non-finite validation loss at step " + std::to_string(rec.step);
    } else if (result.log.empty() || rec.valid_nmt_loss < result.best_valid_loss) {
      rec.improved = true;
      result.best_valid_loss = rec.valid_nmt_loss;
      result.best_step = rec.step;
      result.best = model.to_checkpoint({{"step", rec.step}, {"valid_nmt_loss", rec.valid_nmt_loss}});
      bad = 0;
    } else {
      ++bad;
    }
    const auto now = std::chrono::steady_clock::now();
    result.step_seconds.push_back(std::chrono::duration<double>(now - clock).count());
    clock = now;
    result.log.push_back(rec);
    if (hooks.on_record) hooks.on_record(result.log.back());
  };

  accept(make_record(0, {}, 0));
  double loss_sum = 0;
  std::size_t loss_count = 0;
  LossBreakdown last;
  for (std::size_t step = 1; step <= config.max_steps && !result.diverged; ++step) {
    Batch batch = stream.next();
    try {
      last = train_step(model, adam, vocab, batch, config, step, dropout_rng);
    } catch (const NumericalDivergence& e) {
      result.diverged = true;
      result.divergence_message = e.what();
      break;
    }
    result.final_step = step;
    loss_sum += last.l_total;
    ++loss_count;
    if (step % config.validate_every == 0 || step == config.max_steps) {
      accept(make_record(step, last, loss_sum / static_cast<double>(loss_count)));
      loss_sum = 0;
      loss_count = 0;
      if (bad >= config.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  result.dropped_pairs = stream.dropped();
  return result;
}

}  // namespace wcl
