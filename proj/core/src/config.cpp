#include "wcl/config.hpp"

#include <fstream>

#include "wcl/error.hpp"

namespace wcl {

namespace {

void reject_unknown(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : given.items()) {
    if (!known.contains(key)) throw ConfigError("config: unknown key '" + key + "' in '" + where + "'");
  }
}

std::string symmetrize_name(Symmetrize s) { return s == Symmetrize::kIntersection ? "intersection" : "none"; }

Symmetrize parse_symmetrize(const std::string& s) {
  if (s == "none") return Symmetrize::kNone;
  if (s == "intersection") return Symmetrize::kIntersection;
  throw ConfigError("config: unknown symmetrize '" + s + "' (expected none or intersection)");
}

template <typename F>
void guarded(const std::string& section, F&& f) {
  try {
    f();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: bad value in '" + section + "': " + e.what());
  }
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["corpus"] = {{"bpe_merges", corpus.bpe_merges}, {"bidirectional", corpus.bidirectional}};
  j["aligner"] = {{"iterations", aligner.options.iterations}, {"p0", aligner.options.p0},
                  {"lambda", aligner.options.lambda},         {"shards", aligner.options.shards},
                  {"threads", aligner.options.threads},       {"symmetrize", symmetrize_name(aligner.symmetrize)}};
  j["lexicon"] = {{"top_k", lexicon.options.top_k}, {"alpha", lexicon.options.alpha}, {"threshold", lexicon.threshold}};
  j["model"] = model;
  j["trainer"] = trainer;
  j["eval"] = {{"scope", to_string(eval.scope)},
               {"bootstrap_resamples", eval.bootstrap_resamples},
               {"probe_budget", eval.probe_budget},
               {"max_decode_len", eval.max_decode_len}};
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  const nlohmann::json known = c.to_json();
  reject_unknown(j, known, "<root>");
  for (const auto& [key, value] : j.items()) {
    if (key != "seed") reject_unknown(value, known[key], key);
  }
  guarded("seed", [&] { c.seed = j.value("seed", c.seed); });
  if (j.contains("corpus")) {
    guarded("corpus", [&] {
      const auto& s = j["corpus"];
      c.corpus.bpe_merges = s.value("bpe_merges", c.corpus.bpe_merges);
      c.corpus.bidirectional = s.value("bidirectional", c.corpus.bidirectional);
    });
  }
  if (j.contains("aligner")) {
    guarded("aligner", [&] {
      const auto& s = j["aligner"];
      auto& o = c.aligner.options;
      o.iterations = s.value("iterations", o.iterations);
      o.p0 = s.value("p0", o.p0);
      o.lambda = s.value("lambda", o.lambda);
      o.shards = s.value("shards", o.shards);
      o.threads = s.value("threads", o.threads);
      c.aligner.symmetrize = parse_symmetrize(s.value("symmetrize", symmetrize_name(c.aligner.symmetrize)));
    });
  }
  if (j.contains("lexicon")) {
    guarded("lexicon", [&] {
      const auto& s = j["lexicon"];
      c.lexicon.options.top_k = s.value("top_k", c.lexicon.options.top_k);
      c.lexicon.options.alpha = s.value("alpha", c.lexicon.options.alpha);
      c.lexicon.threshold = s.value("threshold", c.lexicon.threshold);
    });
  }
  if (j.contains("model")) guarded("model", [&] { c.model = j["model"].get<ModelConfig>(); });
  if (j.contains("trainer")) guarded("trainer", [&] { c.trainer = j["trainer"].get<TrainConfig>(); });
  if (j.contains("eval")) {
    guarded("eval", [&] {
      const auto& s = j["eval"];
      c.eval.scope = parse_scope(s.value("scope", to_string(c.eval.scope)));
      c.eval.bootstrap_resamples = s.value("bootstrap_resamples", c.eval.bootstrap_resamples);
      c.eval.probe_budget = s.value("probe_budget", c.eval.probe_budget);
      c.eval.max_decode_len = s.value("max_decode_len", c.eval.max_decode_len);
    });
  }
  c.trainer.seed = c.seed;
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void RunConfig::validate() const {
  if (aligner.options.iterations < 1) throw ConfigError("aligner: iterations must be at least 1");
  if (!(aligner.options.p0 >= 0 && aligner.options.p0 < 1)) throw ConfigError("aligner: p0 must lie in [0, 1)");
  if (!(aligner.options.lambda >= 0)) throw ConfigError("aligner: lambda must be nonnegative");
  if (aligner.options.shards < 1 || aligner.options.threads < 1) throw ConfigError("aligner: shards and threads must be positive");
  if (lexicon.options.top_k < 1) throw ConfigError("lexicon: top_k must be at least 1");
  if (!(lexicon.options.alpha >= 0)) throw ConfigError("lexicon: alpha must be nonnegative");
  if (eval.bootstrap_resamples < 100) throw ConfigError("eval: bootstrap_resamples must be at least 100");
  if (eval.probe_budget == 0 || eval.max_decode_len == 0) throw ConfigError("eval: budgets must be positive");
  trainer.validate();
}

}  // namespace wcl
