#include "wcl/objective.hpp"

#include <cmath>

#include "wcl/error.hpp"

namespace wcl {

namespace {

Tensor info_nce(Tape& tape, const Tensor& src, const Tensor& tgt, Real temperature) {
  if (!(temperature > 0)) throw ContractViolation("contrastive temperature must be positive");
  if (!(src.shape() == tgt.shape())) {
    throw ContractViolation("contrastive reps differ in shape: " + src.shape().str() + " vs " + tgt.shape().str());
  }
  if (src.rows() == 0) return Tensor::scalar(0);
  Tensor sim = tape.scale(tape.cosine_similarity(src, tgt), Real(1) / temperature);
  Tensor fwd = tape.sum(tape.diag(tape.log_softmax(sim, 1)));
  Tensor bwd = tape.sum(tape.diag(tape.log_softmax(sim, 0)));
  return tape.scale(tape.add(fwd, bwd), Real(-1));
}

}  // namespace

Tensor word_contrastive_loss(Tape& tape, const Tensor& src_reps, const Tensor& tgt_reps, Real temperature) {
  return info_nce(tape, src_reps, tgt_reps, temperature);
}

Tensor sentence_contrastive_loss(Tape& tape, const Tensor& src_reps, const Tensor& tgt_reps, Real temperature) {
  return info_nce(tape, src_reps, tgt_reps, temperature);
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"l_nmt", l_nmt}, {"l_align", l_align}, {"n", n},        {"n_t", n_t},
          {"b", b},         {"w", w},             {"t", t},        {"l_total", l_total},
          {"align_active", align_active},         {"aux_tokens", aux_tokens}};
}

LossBreakdown combine(double l_nmt, double l_align, std::size_t b, std::size_t n, std::size_t n_t, double w,
                      double t) {
  if (b == 0) throw ContractViolation("combine: batch size must be at least 1");
  LossBreakdown r;
  r.l_nmt = l_nmt;
  r.l_align = l_align;
  r.b = b;
  r.n = n;
  r.n_t = n_t;
  r.w = w;
  r.t = t;
  r.align_active = n > 0;
  double inner = l_nmt;
  if (n > 0) inner += w * (static_cast<double>(n_t) / (2.0 * static_cast<double>(n))) * l_align;
  r.l_total = inner / static_cast<double>(b);
  return r;
}

Tensor combine(Tape& tape, const Tensor& l_nmt, const Tensor& l_align, std::size_t b, std::size_t n, std::size_t n_t,
               double w) {
  if (b == 0) throw ContractViolation("combine: batch size must be at least 1");
  const Real inv_b = static_cast<Real>(1.0 / static_cast<double>(b));
  if (n == 0) return tape.scale(l_nmt, inv_b);
  const Real mult = static_cast<Real>(w * static_cast<double>(n_t) / (2.0 * static_cast<double>(n)));
  return tape.scale(tape.add(l_nmt, tape.scale(l_align, mult)), inv_b);
}

WordRange subword_rows(const std::vector<WordRange>& spans, const WordRange& words) {
  if (words.empty() || words.end > spans.size()) {
    throw ContractViolation("word range [" + std::to_string(words.begin) + ", " + std::to_string(words.end) +
                            ") outside a sentence of " + std::to_string(spans.size()) + " words");
  }
  return {spans[words.begin].begin + kInputPrefix, spans[words.end - 1].end + kInputPrefix};
}

RepPair gather_pooled(Tape& tape, const Transformer& model, const Batch& batch, const EncoderOutput& src_enc,
                      const EncoderOutput& tgt_enc) {
  std::vector<Tensor> src, tgt;
  src.reserve(batch.alignments.size());
  tgt.reserve(batch.alignments.size());
  for (std::size_t k = 0; k < batch.alignments.size(); ++k) {
    const auto& e = batch.alignments.entries[k];
    if (e.sentence >= batch.pairs.size()) {
      throw ContractViolation("alignment " + std::to_string(k) + " names sentence " + std::to_string(e.sentence) +
                              " in a batch of " + std::to_string(batch.pairs.size()));
    }
    const SentencePair& p = batch.pairs[e.sentence];
    WordRange rs, rt;
    try {
      rs = subword_rows(p.src_spans, e.pair.src);
      rt = subword_rows(p.tgt_spans, e.pair.tgt);
    } catch (const ContractViolation& ex) {
      throw ContractViolation("sentence " + std::to_string(e.sentence) + ", pair " + std::to_string(k) + ": " +
                              ex.what());
    }
    src.push_back(model.pool_span(tape, src_enc, e.sentence, rs.begin, rs.end));
    tgt.push_back(model.pool_span(tape, tgt_enc, e.sentence, rt.begin, rt.end));
  }
  if (src.empty()) return {};
  return {tape.concat(src, 0), tape.concat(tgt, 0)};
}

RepPair gather_reps(Tape& tape, const Transformer& model, const Batch& batch, const EncoderOutput& src_enc,
                    const EncoderOutput& tgt_enc) {
  RepPair pooled = gather_pooled(tape, model, batch, src_enc, tgt_enc);
  if (!pooled.src.defined()) return pooled;
  return {model.project(tape, pooled.src), model.project(tape, pooled.tgt)};
}

Tensor pool_subwords(Tape& tape, const Transformer& model, const EncoderOutput& enc, std::size_t s,
                     std::size_t subwords) {
  return model.pool_span(tape, enc, s, kInputPrefix, kInputPrefix + subwords);
}

}  // namespace wcl
