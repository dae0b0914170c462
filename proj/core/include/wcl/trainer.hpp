#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcl/checkpoint.hpp"
#include "wcl/corpus.hpp"
#include "wcl/model.hpp"
#include "wcl/objective.hpp"

namespace wcl {

// Word modes differ only in where the alignments came from.
enum class ObjectiveMode { kNmtOnly, kW2w, kFa, kSent };

std::string to_string(ObjectiveMode mode);
ObjectiveMode parse_mode(const std::string& text);
bool is_word_mode(ObjectiveMode mode);

struct TrainConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double lr = 5e-4;
  std::size_t warmup = 400;
  std::size_t max_steps = 3000;
  std::size_t validate_every = 1000;
  std::size_t patience = 8;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  ObjectiveMode mode = ObjectiveMode::kNmtOnly;
  double weight = kDefaultAlignWeight;
  double temperature = kDefaultTemperature;
  std::size_t budget = 1024;
  double sampling_temperature = 1.5;
  std::size_t valid_budget = 1024;
  std::size_t probe_budget = 512;  // word retrieval batches

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// lr * min(step / warmup, sqrt(warmup / step)) for 1-based steps.
double learning_rate(const TrainConfig& config, std::size_t step);

class Adam {
 public:
  Adam(const TrainConfig& config, std::size_t num_params);
  // Applies one update with the gradients currently held by the parameters.
  void update(std::vector<std::pair<std::string, Tensor>>& params, double lr);
  std::size_t steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::vector<std::vector<Real>> m_, v_;
  std::size_t t_ = 0;
};

// Global L2 norm over all parameter gradients; scales them down to
// max_norm when it is exceeded. Returns the norm before clipping.
double clip_gradients(std::vector<std::pair<std::string, Tensor>>& params, double max_norm);

// Forward and backward for one batch; leaves gradients on the parameters.
// The NMT forward always runs first, so the dropout stream is consumed in
// the same order whatever the mode. With weight 0 the contrastive branch
// is skipped entirely.
LossBreakdown compute_gradients(Transformer& model, const Vocabulary& vocab, const Batch& batch,
                                const TrainConfig& config, std::mt19937_64* dropout_rng);

// compute_gradients, clipping and one optimizer update. Throws
// NumericalDivergence before touching the parameters when the loss or
// gradient norm is not finite.
LossBreakdown train_step(Transformer& model, Adam& optimizer, const Vocabulary& vocab, const Batch& batch,
                         const TrainConfig& config, std::size_t step, std::mt19937_64& dropout_rng);

struct ValidationResult {
  double nmt_loss = 0;       // per target token
  double combined_loss = 0;  // per sentence, mode's combination
  std::size_t tokens = 0;
  std::size_t sentences = 0;
};

ValidationResult validate(const Transformer& model, const Vocabulary& vocab, const std::vector<SentencePair>& pairs,
                          const TrainConfig& config);

struct TrainLogRecord {
  std::size_t step = 0;
  LossBreakdown last;  // breakdown of the most recent step
  double train_loss_mean = 0;  // mean L_total since the previous record
  double valid_nmt_loss = 0;
  double valid_combined_loss = 0;
  std::map<std::string, double> sentence_p1;  // per language pair, average of both directions
  std::map<std::string, double> word_p1;
  bool improved = false;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<TrainLogRecord> log;
  Checkpoint best;
  std::size_t best_step = 0;
  double best_valid_loss = 0;
  std::size_t final_step = 0;
  bool stopped_early = false;
  bool diverged = false;
  std::string divergence_message;
  std::size_t dropped_pairs = 0;
  std::vector<double> step_seconds;  // wall time per validation interval, kept out of the log
};

struct TrainHooks {
  std::function<void(const TrainLogRecord&)> on_record;
};

// Runs until max_steps or until `patience` consecutive validations fail to
// improve the NMT validation loss. Validation also runs at step 0. The
// model is left at its final state; `best` holds the best parameters.
// A non-finite step ends training with diverged = true.
TrainResult train(Transformer& model, const Vocabulary& vocab, const ParallelCorpus& corpus,
                  const ParallelCorpus& valid, const TrainConfig& config, const TrainHooks& hooks = {});

// Deterministic sub-seeds derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace wcl
