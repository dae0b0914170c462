#pragma once

#include <cstddef>
#include <string>

#include "json.hpp"
#include "wcl/autodiff.hpp"
#include "wcl/corpus.hpp"
#include "wcl/model.hpp"

namespace wcl {

inline constexpr double kDefaultAlignWeight = 0.1;
inline constexpr double kDefaultTemperature = 0.2;

// Bidirectional InfoNCE over N aligned rows:
//   L = -sum_k [ log softmax_m(sim(s_k, t_m) / T)[k] + log softmax_m(sim(s_m, t_k) / T)[k] ]
// with cosine similarity. src and tgt are N x d'. N = 0 yields a constant 0.
Tensor word_contrastive_loss(Tape& tape, const Tensor& src_reps, const Tensor& tgt_reps, Real temperature);
// Same form with sentences as units.
Tensor sentence_contrastive_loss(Tape& tape, const Tensor& src_reps, const Tensor& tgt_reps, Real temperature);

struct LossBreakdown {
  double l_nmt = 0;
  double l_align = 0;
  std::size_t n = 0;    // alignment pairs (or sentences in sentence mode)
  std::size_t n_t = 0;  // batch subword tokens, source + target
  std::size_t b = 0;
  double w = 0;
  double t = 0;
  double l_total = 0;
  bool align_active = false;  // false when N = 0 dropped the second term
  std::size_t aux_tokens = 0;  // tokens of the target-side encoder pass

  nlohmann::json to_json() const;
};

// (1/B) (L_NMT + w N_T / (2N) L_align); the second term is dropped at N = 0.
LossBreakdown combine(double l_nmt, double l_align, std::size_t b, std::size_t n, std::size_t n_t, double w,
                      double t = kDefaultTemperature);
// The same combination on the tape, for gradients.
Tensor combine(Tape& tape, const Tensor& l_nmt, const Tensor& l_align, std::size_t b, std::size_t n, std::size_t n_t,
               double w);

struct RepPair {
  Tensor src;  // N x d'
  Tensor tgt;
};

// Subword rows of a word range inside an encoder input.
WordRange subword_rows(const std::vector<WordRange>& spans, const WordRange& words);

// Pooled encoder states of every aligned range, before projection. src_enc
// encodes the source inputs, tgt_enc the target sentences as encoder inputs.
RepPair gather_pooled(Tape& tape, const Transformer& model, const Batch& batch, const EncoderOutput& src_enc,
                      const EncoderOutput& tgt_enc);
// gather_pooled followed by the projection head.
RepPair gather_reps(Tape& tape, const Transformer& model, const Batch& batch, const EncoderOutput& src_enc,
                    const EncoderOutput& tgt_enc);

// Mean of the subword rows of sentence s (language tag and EOS excluded).
Tensor pool_subwords(Tape& tape, const Transformer& model, const EncoderOutput& enc, std::size_t s,
                     std::size_t subwords);

}  // namespace wcl
