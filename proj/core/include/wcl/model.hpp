#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wcl/autodiff.hpp"
#include "wcl/checkpoint.hpp"
#include "wcl/corpus.hpp"

namespace wcl {

struct ModelConfig {
  std::size_t layers_enc = 2;
  std::size_t layers_dec = 2;
  std::size_t d = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 256;
  std::size_t d_proj = 16;  // projection head output, must stay below d
  double dropout_nmt = 0.3;
  double dropout_contrastive = 0.2;
  std::size_t vocab_size = 0;
  std::size_t max_positions = 256;
  double label_smoothing = 0.1;

  // Throws ConfigError on d % heads != 0, d_proj outside (0, d), etc.
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Contextual states for a list of sentences laid out back to back:
// sentence s occupies rows [offsets[s], offsets[s] + lengths[s]).
struct EncoderOutput {
  Tensor states;
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> lengths;
};

// Per-call execution settings. Dropout is active only when rate > 0 and
// an rng is supplied.
struct RunContext {
  Tape* tape = nullptr;
  Real dropout = 0;
  std::mt19937_64* rng = nullptr;
};

// Encoder input for translation: target-language tag, source subwords, EOS.
std::vector<TokenId> source_input(const SentencePair& pair, const Vocabulary& vocab);
// The target sentence fed to the encoder with its own language tag.
std::vector<TokenId> target_as_source_input(const SentencePair& pair, const Vocabulary& vocab);
// Offset of subword 0 inside an encoder input.
inline constexpr std::size_t kInputPrefix = 1;

// Pre-norm transformer encoder-decoder with sinusoidal positions, one
// embedding matrix shared by encoder input, decoder input and output
// projection, and a bias-free contrastive head relu(x W1) W2.
class Transformer {
 public:
  Transformer(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  const Tensor& parameter(const std::string& name) const;
  const Tensor& head_w1() const { return parameter("head.w1"); }
  const Tensor& head_w2() const { return parameter("head.w2"); }
  void zero_grad();

  Checkpoint to_checkpoint(nlohmann::json meta) const;
  void load(const Checkpoint& ckpt);
  static Transformer from_checkpoint(const Checkpoint& ckpt);

  EncoderOutput encode(RunContext& ctx, const std::vector<std::vector<TokenId>>& inputs) const;

  // Sum over target tokens of the label-smoothed cross-entropy under
  // teacher forcing: decoder input BOS + target, prediction target + EOS.
  Tensor decode_loss(RunContext& ctx, const EncoderOutput& enc, const std::vector<std::vector<TokenId>>& targets,
                     Real smoothing) const;
  // Logits for decoder inputs against the matching encoder sentences.
  Tensor decoder_logits(RunContext& ctx, const EncoderOutput& enc,
                        const std::vector<std::vector<TokenId>>& decoder_inputs) const;

  Tensor pool_span(Tape& tape, const EncoderOutput& enc, std::size_t sentence, std::size_t begin,
                   std::size_t end) const;
  // Mean over all rows of one sentence.
  Tensor pool_sentence(Tape& tape, const EncoderOutput& enc, std::size_t sentence) const;
  // Applies the head to every row of x.
  Tensor project(Tape& tape, const Tensor& x) const;

  // Argmax decoding until EOS or max_len tokens; EOS is not returned.
  std::vector<TokenId> greedy_decode(const std::vector<TokenId>& source, std::size_t max_len) const;

 private:
  struct Linear {
    Tensor w, b;
  };
  struct Norm {
    Tensor gain, bias;
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct EncoderLayer {
    Norm ln1, ln2;
    Attention self;
    Linear ff1, ff2;
  };
  struct DecoderLayer {
    Norm ln1, ln2, ln3;
    Attention self, cross;
    Linear ff1, ff2;
  };

  Tensor& add_param(const std::string& name, Shape shape, std::vector<Real> values);
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);
  Norm make_norm(const std::string& name);
  Attention make_attention(const std::string& name, std::mt19937_64& rng);
  void rebind();

  Tensor embed(RunContext& ctx, const std::vector<std::vector<TokenId>>& seqs) const;
  Tensor linear(Tape& tape, const Tensor& x, const Linear& l) const;
  Tensor norm(Tape& tape, const Tensor& x, const Norm& n) const;
  Tensor attention(RunContext& ctx, const Attention& a, const Tensor& xq, const Tensor& xkv,
                   const std::vector<std::size_t>& q_off, const std::vector<std::size_t>& q_len,
                   const std::vector<std::size_t>& k_off, const std::vector<std::size_t>& k_len, bool causal) const;
  Tensor feed_forward(RunContext& ctx, const Tensor& x, const Linear& ff1, const Linear& ff2) const;

  ModelConfig config_;
  std::vector<std::pair<std::string, Tensor>> params_;
  Tensor embedding_;
  Tensor positions_;  // constant sinusoid table
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  Norm enc_final_, dec_final_;
};

}  // namespace wcl
