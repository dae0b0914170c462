#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "json.hpp"
#include "wcl/aligner.hpp"
#include "wcl/evalx.hpp"
#include "wcl/lexicon.hpp"
#include "wcl/model.hpp"
#include "wcl/trainer.hpp"

namespace wcl {

struct CorpusConfig {
  std::size_t bpe_merges = 200;
  bool bidirectional = true;  // also train on every pair reversed
};

struct AlignerConfig {
  AlignerOptions options;
  Symmetrize symmetrize = Symmetrize::kNone;
};

struct LexiconConfig {
  LexiconOptions options;
  double threshold = 0.0;
};

struct EvalConfig {
  RetrievalScope scope = RetrievalScope::kFull;
  std::size_t bootstrap_resamples = 1000;
  std::size_t probe_budget = 512;
  std::size_t max_decode_len = 64;
};

// The single JSON document shared by every command. Missing keys take
// their defaults; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  CorpusConfig corpus;
  AlignerConfig aligner;
  LexiconConfig lexicon;
  ModelConfig model;
  TrainConfig trainer;
  EvalConfig eval;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  void validate() const;
};

}  // namespace wcl
