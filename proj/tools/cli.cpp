#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "manifest.hpp"
#include "wcl/checkpoint.hpp"
#include "wcl/config.hpp"
#include "wcl/digest.hpp"
#include "wcl/error.hpp"
#include "wcl/evalx.hpp"
#include "wcl/pipeline.hpp"
#include "wcl/synthetic.hpp"
#include "wcl/trainer.hpp"
#include "wcl/utf8.hpp"

namespace wcl::cli {

namespace fs = std::filesystem;

namespace {

// Thrown by a command after it has written its outputs, to turn the run
// into a nonzero exit without losing the artifacts.
struct ExitWith {
  int code;
};

struct Io {
  std::vector<std::string> argv;
  std::ostream& out;
  std::ostream& err;
  std::string manifest_path;  // set by the command that ran
};

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

RunConfig load_config(const std::string& path, Manifest& m) {
  if (path.empty()) return RunConfig{};
  m.add_input("config", path);
  return RunConfig::load(path);
}

RawBitext load_bitext(const std::string& text, Manifest& m, const std::string& role) {
  BitextSpec spec = BitextSpec::parse(text);
  RawBitext b = read_bitext(spec);
  m.add_input(role + "." + spec.src, spec.src_path());
  m.add_input(role + "." + spec.tgt, spec.tgt_path());
  return b;
}

std::vector<RawBitext> load_bitexts(const std::vector<std::string>& texts, Manifest& m, const std::string& role) {
  std::vector<RawBitext> out;
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(load_bitext(texts[i], m, role + std::to_string(i)));
  return out;
}

SentenceAlignments load_alignments(const std::string& path, Manifest& m, const std::string& role) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open alignment file '" + path + "'");
  m.add_input(role, path);
  // Single-word ranges are written as plain indices, so Pharaoh files
  // from extract-align read as word pairs unchanged.
  return read_word_pairs(in);
}

std::vector<AlignedBitext> attach(std::vector<RawBitext> bitexts, const std::vector<std::string>& align_files,
                                  Manifest& m, const std::string& role) {
  if (!align_files.empty() && align_files.size() != bitexts.size()) {
    throw ConfigError("got " + std::to_string(align_files.size()) + " alignment files for " +
                      std::to_string(bitexts.size()) + " bitexts");
  }
  std::vector<AlignedBitext> out;
  for (std::size_t i = 0; i < bitexts.size(); ++i) {
    AlignedBitext a{std::move(bitexts[i]), {}};
    if (!align_files.empty()) a.alignments = load_alignments(align_files[i], m, role + std::to_string(i));
    out.push_back(std::move(a));
  }
  return out;
}

struct LoadedModel {
  Transformer model;
  Vocabulary vocab;
  Checkpoint ckpt;
};

LoadedModel load_model(const std::string& path, Manifest& m) {
  m.add_input("checkpoint", path);
  Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.meta.contains("vocab")) throw ConfigError("checkpoint '" + path + "' carries no vocabulary");
  Vocabulary vocab = vocabulary_from_json(ckpt.meta["vocab"]);
  Transformer model = Transformer::from_checkpoint(ckpt);
  return {std::move(model), std::move(vocab), std::move(ckpt)};
}

std::string output_manifest_path(const std::string& out) { return out + ".manifest.json"; }

void ensure_parent(const std::string& path) {
  const fs::path p = fs::path(path).parent_path();
  if (!p.empty()) fs::create_directories(p);
}

// ---------------------------------------------------------------- synth

struct SynthOptions {
  std::string out_dir;
  std::size_t pairs = 2000;
  std::size_t valid = 200;
  std::size_t test = 200;
  std::size_t vocab = 50;
  std::size_t min_len = 3;
  std::size_t max_len = 8;
  std::uint64_t seed = 1;
};

void cmd_synth(const SynthOptions& o, Io& io) {
  Manifest m("synth", io.argv);
  m.set_seed(o.seed);
  m.set_output_flag("--out-dir", o.out_dir);
  m.set_config({{"pairs", o.pairs}, {"valid", o.valid}, {"test", o.test}, {"vocab", o.vocab},
                {"min_len", o.min_len}, {"max_len", o.max_len}});
  fs::create_directories(o.out_dir);
  const auto xx = make_words(o.vocab, 0, derive_seed(o.seed, 10));
  const auto yy = make_words(o.vocab, 1, derive_seed(o.seed, 11));
  const auto zz = make_words(o.vocab, 2, derive_seed(o.seed, 12));
  std::ostringstream dict;
  dict << "xx\tyy\tzz\n";
  for (std::size_t i = 0; i < xx.size(); ++i) dict << xx[i] << '\t' << yy[i] << '\t' << zz[i] << '\n';
  const std::string dict_path = (fs::path(o.out_dir) / "dict.tsv").string();
  write_text_file(dict_path, dict.str());
  m.add_output("dict", dict_path);

  struct Task {
    std::string name, tgt;
    const std::vector<std::string>* words;
    WordOrder order;
  };
  const Task tasks[] = {{"copy", "yy", &yy, WordOrder::kMonotone}, {"rev", "zz", &zz, WordOrder::kReversed}};
  const std::pair<std::string, std::size_t> splits[] = {{"train", o.pairs}, {"valid", o.valid}, {"test", o.test}};
  std::uint64_t stream = 100;
  for (const auto& t : tasks) {
    Dictionary d{xx, *t.words};
    for (const auto& [split, n] : splits) {
      if (n == 0) continue;
      SyntheticCorpus c = generate_corpus(d, "xx", t.tgt, {n, o.min_len, o.max_len, t.order, derive_seed(o.seed, stream++)});
      const BitextSpec spec{(fs::path(o.out_dir) / (t.name + "." + split)).string(), "xx", t.tgt};
      write_bitext(spec, c.bitext);
      std::ostringstream gold;
      write_pharaoh(gold, c.gold);
      const std::string gold_path = spec.prefix + ".gold";
      write_text_file(gold_path, gold.str());
      m.add_output(t.name + "." + split + ".xx", spec.src_path());
      m.add_output(t.name + "." + split + "." + t.tgt, spec.tgt_path());
      m.add_output(t.name + "." + split + ".gold", gold_path);
      io.out << spec.prefix << ":xx:" << t.tgt << "  " << n << " pairs\n";
    }
  }
  io.manifest_path = (fs::path(o.out_dir) / "manifest.json").string();
  m.write(io.manifest_path);
}

// --------------------------------------------------------- extract-align

struct AlignCmdOptions {
  std::string config;
  std::string bitext;
  std::vector<std::string> extra;
  std::size_t iters = 0;
  double p0 = 0;
  double lambda = 0;
  std::string symmetrize;
  std::size_t threads = 1;
  std::string out;
  std::string table_out;
  CLI::App* app = nullptr;
};

void cmd_extract_align(const AlignCmdOptions& o, Io& io) {
  Manifest m("extract-align", io.argv);
  m.set_output_flag("--out", o.out);
  RunConfig cfg = load_config(o.config, m);
  if (o.app->count("--iters")) cfg.aligner.options.iterations = o.iters;
  if (o.app->count("--p0")) cfg.aligner.options.p0 = o.p0;
  if (o.app->count("--lambda")) cfg.aligner.options.lambda = o.lambda;
  if (o.app->count("--threads")) cfg.aligner.options.threads = o.threads;
  if (o.app->count("--symmetrize")) {
    if (o.symmetrize != "none" && o.symmetrize != "intersection") {
      throw ConfigError("--symmetrize must be none or intersection, got '" + o.symmetrize + "'");
    }
    cfg.aligner.symmetrize = o.symmetrize == "none" ? Symmetrize::kNone : Symmetrize::kIntersection;
  }
  cfg.validate();
  m.set_config(cfg.to_json()["aligner"]);
  m.set_seed(cfg.seed);
  RawBitext bitext = load_bitext(o.bitext, m, "bitext");
  if (bitext.size() == 0) throw ConfigError("bitext '" + o.bitext + "' is empty");
  std::vector<RawBitext> extra = load_bitexts(o.extra, m, "extra");
  FaExtraction r = extract_fa(bitext, extra, cfg.aligner.options, cfg.aligner.symmetrize);

  ensure_parent(o.out);
  std::ostringstream links;
  std::vector<Links> all = r.run.links;
  write_pharaoh(links, all);
  write_text_file(o.out, links.str());
  m.add_output("alignments", o.out);
  if (!o.table_out.empty()) {
    std::ostringstream table;
    r.run.forward.table.write_tsv(table);
    write_text_file(o.table_out, table.str());
    m.add_output("table", o.table_out);
  }
  const std::size_t n = count_pairs(r.pairs);
  m.extra()["links"] = n;
  m.extra()["sentences"] = bitext.size();
  m.extra()["log_likelihood"] = r.run.forward.log_likelihood;
  io.out << "sentences: " << bitext.size() << "\n";
  io.out << "links after 1-to-1 filter: " << n << "\n";
  io.out << "pairs per sentence: " << fixed(pairs_per_sentence(n, bitext.size()), 1) << "\n";
  io.out << "log-likelihood:";
  for (double ll : r.run.forward.log_likelihood) io.out << ' ' << fixed(ll, 4);
  io.out << "\n";
  io.manifest_path = output_manifest_path(o.out);
  m.write(io.manifest_path);
}

// ------------------------------------------------------- extract-lexicon

struct LexiconCmdOptions {
  std::string config;
  std::string bitext;
  std::size_t topk = 0;
  double threshold = 0;
  double alpha = 0;
  std::string out;
  std::string lexicon_out;
  CLI::App* app = nullptr;
};

void cmd_extract_lexicon(const LexiconCmdOptions& o, Io& io) {
  Manifest m("extract-lexicon", io.argv);
  m.set_output_flag("--out", o.out);
  RunConfig cfg = load_config(o.config, m);
  if (o.app->count("--topk")) cfg.lexicon.options.top_k = o.topk;
  if (o.app->count("--threshold")) cfg.lexicon.threshold = o.threshold;
  if (o.app->count("--alpha")) cfg.lexicon.options.alpha = o.alpha;
  cfg.validate();
  m.set_config(cfg.to_json()["lexicon"]);
  m.set_seed(cfg.seed);
  RawBitext bitext = load_bitext(o.bitext, m, "bitext");
  if (bitext.size() == 0) throw ConfigError("bitext '" + o.bitext + "' is empty");
  W2wExtraction r = extract_w2w(bitext, cfg.lexicon.options, cfg.lexicon.threshold);

  ensure_parent(o.out);
  const std::string lex_path = o.lexicon_out.empty() ? o.out + ".lexicon.tsv" : o.lexicon_out;
  std::ostringstream lex, pairs;
  r.lexicon.write_tsv(lex);
  write_word_pairs(pairs, r.pairs);
  write_text_file(lex_path, lex.str());
  write_text_file(o.out, pairs.str());
  m.add_output("pairs", o.out);
  m.add_output("lexicon", lex_path);
  const std::size_t n = count_pairs(r.pairs);
  m.extra()["word_pairs"] = r.word_pairs;
  m.extra()["merged_pairs"] = n;
  m.extra()["sentences"] = bitext.size();
  io.out << "sentences: " << bitext.size() << "\n";
  io.out << "word pairs: " << r.word_pairs << " (" << n << " after phrase merging)\n";
  io.out << "pairs per sentence: " << fixed(pairs_per_sentence(n, bitext.size()), 1) << "\n";
  io.manifest_path = output_manifest_path(o.out);
  m.write(io.manifest_path);
}

// ------------------------------------------------------------------ train

struct TrainCmdOptions {
  std::string config;
  std::string mode;
  std::vector<std::string> bitexts;
  std::vector<std::string> align_files;
  std::vector<std::string> valid_bitexts;
  std::vector<std::string> valid_align_files;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;
  std::size_t validate_every = 0;
  std::size_t patience = 0;
  std::size_t budget = 0;
  double lr = 0;
  std::size_t warmup = 0;
  CLI::App* app = nullptr;
};

// Runs with the same seed and data differ only in objective; correlate
// pairs them through this key.
std::string group_key(const Manifest& m) {
  nlohmann::json j = m.to_json();
  nlohmann::json key = {{"seed", j["seed"]}, {"inputs", nlohmann::json::array()}};
  for (const auto& in : j["inputs"]) {
    const std::string role = in["role"];
    if (role.rfind("bitext", 0) == 0 || role.rfind("valid", 0) == 0) key["inputs"].push_back({role, in["sha256"]});
  }
  return sha256_hex(key.dump()).substr(0, 16);
}

void cmd_train(const TrainCmdOptions& o, Io& io) {
  Manifest m("train", io.argv);
  m.set_output_flag("--out-dir", o.out_dir);
  RunConfig cfg = load_config(o.config, m);
  if (o.app->count("--seed")) cfg.seed = o.seed;
  cfg.trainer.seed = cfg.seed;
  if (o.app->count("--mode")) cfg.trainer.mode = parse_mode(o.mode);
  if (o.app->count("--max-steps")) cfg.trainer.max_steps = o.max_steps;
  if (o.app->count("--validate-every")) cfg.trainer.validate_every = o.validate_every;
  if (o.app->count("--patience")) cfg.trainer.patience = o.patience;
  if (o.app->count("--budget")) cfg.trainer.budget = o.budget;
  if (o.app->count("--lr")) cfg.trainer.lr = o.lr;
  if (o.app->count("--warmup")) cfg.trainer.warmup = o.warmup;
  cfg.validate();
  if (is_word_mode(cfg.trainer.mode) && o.align_files.empty()) {
    throw ConfigError("mode " + to_string(cfg.trainer.mode) + " needs --align-file");
  }

  std::vector<RawBitext> train_raw = load_bitexts(o.bitexts, m, "bitext");
  std::vector<RawBitext> valid_raw = load_bitexts(o.valid_bitexts, m, "valid");
  for (const auto& b : train_raw) {
    if (b.size() == 0) throw ConfigError("a training bitext is empty");
  }
  Vocabulary vocab = build_vocabulary(train_raw, cfg.corpus.bpe_merges);
  const std::vector<std::string> align = is_word_mode(cfg.trainer.mode) ? o.align_files : std::vector<std::string>{};
  ParallelCorpus corpus = build_corpus(attach(train_raw, align, m, "align"), vocab, cfg.corpus.bidirectional);
  ParallelCorpus valid = build_corpus(attach(valid_raw, o.valid_align_files, m, "valid_align"), vocab, false);

  cfg.model.vocab_size = vocab.size();
  std::size_t longest = 0;
  for (const auto* c : {&corpus, &valid}) {
    for (const auto& [_, ps] : c->by_pair) {
      for (const auto& p : ps) longest = std::max({longest, p.src_subwords.size(), p.tgt_subwords.size()});
    }
  }
  if (longest + 2 > cfg.model.max_positions) {
    throw ConfigError("a sentence has " + std::to_string(longest) + " subwords; model.max_positions is " +
                      std::to_string(cfg.model.max_positions));
  }
  m.set_config(cfg.to_json());
  m.set_seed(cfg.seed);

  fs::create_directories(o.out_dir);
  const fs::path dir(o.out_dir);
  Transformer model(cfg.model, derive_seed(cfg.seed, 0));
  std::ostringstream log;
  std::ostringstream csv;
  csv << "step,pair,granularity,p1\n";
  TrainHooks hooks;
  hooks.on_record = [&](const TrainLogRecord& r) {
    log << r.to_json().dump() << "\n";
    for (const auto& [pair, v] : r.sentence_p1) csv << r.step << ',' << pair << ",sentence," << v << "\n";
    for (const auto& [pair, v] : r.word_p1) csv << r.step << ',' << pair << ",word," << v << "\n";
    io.err << "step " << r.step << "  valid_nmt_loss " << fixed(r.valid_nmt_loss, 4) << (r.improved ? " *" : "")
           << "\n";
  };
  TrainResult res = train(model, vocab, corpus, valid, cfg.trainer, hooks);

  nlohmann::json meta_common = {{"vocab", vocabulary_to_json(vocab)},
                                {"mode", to_string(cfg.trainer.mode)},
                                {"seed", cfg.seed}};
  Checkpoint best = res.best;
  best.meta.update(meta_common);
  Checkpoint last = model.to_checkpoint({{"step", res.final_step}});
  last.meta.update(meta_common);

  const std::string ckpt_path = (dir / "checkpoint.bin").string(), last_path = (dir / "last.bin").string();
  save_checkpoint(ckpt_path, best);
  save_checkpoint(last_path, last);
  std::ostringstream vocab_tsv, merges;
  vocab.write_tsv(vocab_tsv);
  vocab.write_merges(merges);
  const auto path = [&](const char* name) { return (dir / name).string(); };
  write_text_file(path("vocab.tsv"), vocab_tsv.str());
  write_text_file(path("merges.txt"), merges.str());
  write_text_file(path("train_log.jsonl"), log.str());
  write_text_file(path("retrieval.csv"), csv.str());
  write_json_file(path("config.json"), cfg.to_json());
  std::ostringstream timing;
  for (std::size_t i = 0; i < res.step_seconds.size(); ++i) {
    timing << nlohmann::json{{"record", i}, {"step", res.log[i].step}, {"seconds", res.step_seconds[i]}}.dump() << "\n";
  }
  write_text_file(path("timing.jsonl"), timing.str());

  m.add_output("checkpoint", ckpt_path);
  m.add_output("last", last_path);
  m.add_output("vocab", path("vocab.tsv"));
  m.add_output("merges", path("merges.txt"));
  m.add_output("log", path("train_log.jsonl"));
  m.add_output("retrieval", path("retrieval.csv"));
  m.add_output("config", path("config.json"));
  m.add_volatile("timing", path("timing.jsonl"));
  m.extra() = {{"mode", to_string(cfg.trainer.mode)},
               {"best_step", res.best_step},
               {"best_valid_loss", res.best_valid_loss},
               {"final_step", res.final_step},
               {"stopped_early", res.stopped_early},
               {"diverged", res.diverged},
               {"dropped_pairs", res.dropped_pairs},
               {"skipped_pairs", corpus.skipped + valid.skipped}};
  m.extra()["group"] = group_key(m);
  io.manifest_path = path("manifest.json");
  m.write(io.manifest_path);
  io.out << "best step " << res.best_step << ", valid_nmt_loss " << fixed(res.best_valid_loss, 4) << "\n";
  if (res.diverged) {
    io.err << "training diverged: " << res.divergence_message << "\n";
    throw ExitWith{kExitDivergence};
  }
}

// --------------------------------------------------------------- evaluate

struct EvaluateCmdOptions {
  std::string config;
  std::string checkpoint;
  std::vector<std::string> test_bitexts;
  std::vector<std::string> hyps;
  std::vector<std::string> baseline_hyps;
  std::string out;
  std::string hyp_out;
  std::size_t resamples = 0;
  std::uint64_t seed = 0;
  std::size_t max_len = 0;
  CLI::App* app = nullptr;
};

std::vector<Tokens> read_token_lines(const std::string& path, Manifest& m, const std::string& role) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  m.add_input(role, path);
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(split_words(line));
  return out;
}

void cmd_evaluate(const EvaluateCmdOptions& o, Io& io) {
  Manifest m("evaluate", io.argv);
  m.set_output_flag("--out", o.out);
  RunConfig cfg = load_config(o.config, m);
  if (o.app->count("--seed")) cfg.seed = o.seed;
  if (o.app->count("--resamples")) cfg.eval.bootstrap_resamples = o.resamples;
  if (o.app->count("--max-len")) cfg.eval.max_decode_len = o.max_len;
  cfg.validate();
  m.set_config(cfg.to_json()["eval"]);
  m.set_seed(cfg.seed);
  if (o.checkpoint.empty() && o.hyps.empty()) throw ConfigError("evaluate needs --checkpoint or --hyp");
  if (!o.hyps.empty() && o.hyps.size() != o.test_bitexts.size()) {
    throw ConfigError("got " + std::to_string(o.hyps.size()) + " --hyp files for " +
                      std::to_string(o.test_bitexts.size()) + " test bitexts");
  }
  if (!o.baseline_hyps.empty() && o.baseline_hyps.size() != o.test_bitexts.size()) {
    throw ConfigError("got " + std::to_string(o.baseline_hyps.size()) + " --baseline-hyp files for " +
                      std::to_string(o.test_bitexts.size()) + " test bitexts");
  }
  std::optional<LoadedModel> loaded;
  if (o.hyps.empty()) loaded = load_model(o.checkpoint, m);

  nlohmann::json report = {{"pairs", nlohmann::json::object()}};
  std::vector<Tokens> all_hyp, all_ref;
  for (std::size_t i = 0; i < o.test_bitexts.size(); ++i) {
    RawBitext b = load_bitext(o.test_bitexts[i], m, "test" + std::to_string(i));
    if (b.size() == 0) throw ConfigError("test bitext '" + o.test_bitexts[i] + "' is empty");
    std::vector<Tokens> refs;
    for (const auto& l : b.tgt_lines) refs.push_back(split_words(l));
    std::vector<Tokens> hyp;
    if (loaded) {
      std::vector<SentencePair> pairs;
      for (std::size_t k = 0; k < b.size(); ++k) {
        auto p = segment(b.src_lines[k], b.tgt_lines[k], b.src_lang, b.tgt_lang, loaded->vocab);
        if (!p) throw ConfigError("test bitext '" + o.test_bitexts[i] + "' has an empty line " + std::to_string(k + 1));
        pairs.push_back(std::move(*p));
      }
      hyp = translate(loaded->model, loaded->vocab, pairs, cfg.eval.max_decode_len);
    } else {
      hyp = read_token_lines(o.hyps[i], m, "hyp" + std::to_string(i));
    }
    if (hyp.size() != refs.size()) {
      throw ConfigError("hypotheses have " + std::to_string(hyp.size()) + " lines, references " +
                        std::to_string(refs.size()));
    }
    const std::string label = b.src_lang + "-" + b.tgt_lang;
    BleuReport r = bleu(hyp, refs);
    nlohmann::json entry = r.to_json();
    io.out << std::left << std::setw(10) << label << r.to_text() << "\n";
    if (!o.baseline_hyps.empty()) {
      std::vector<Tokens> base = read_token_lines(o.baseline_hyps[i], m, "baseline" + std::to_string(i));
      if (base.size() != refs.size()) {
        throw ConfigError("baseline has " + std::to_string(base.size()) + " lines, references " +
                          std::to_string(refs.size()));
      }
      BootstrapResult bs = bootstrap_significance(hyp, base, refs, cfg.eval.bootstrap_resamples, cfg.seed);
      entry["bootstrap"] = bs.to_json();
      io.out << std::setw(10) << "" << "vs baseline " << fixed(bs.bleu_b, 2) << ": p = " << fixed(bs.p_value, 4)
             << "\n";
    }
    if (!o.hyp_out.empty()) {
      std::ostringstream text;
      for (const auto& h : hyp) text << join(h) << "\n";
      const std::string hp = o.hyp_out + "." + label;
      ensure_parent(hp);
      write_text_file(hp, text.str());
      m.add_output("hyp." + label, hp);
    }
    report["pairs"][label] = entry;
    all_hyp.insert(all_hyp.end(), hyp.begin(), hyp.end());
    all_ref.insert(all_ref.end(), refs.begin(), refs.end());
  }
  if (all_hyp.empty()) throw ConfigError("evaluate needs at least one --test-bitext");
  BleuReport overall = bleu(all_hyp, all_ref);
  report["overall"] = overall.to_json();
  io.out << std::left << std::setw(10) << "overall" << overall.to_text() << "\n";
  if (!o.out.empty()) {
    ensure_parent(o.out);
    write_json_file(o.out, report);
    m.add_output("report", o.out);
    io.manifest_path = output_manifest_path(o.out);
    m.write(io.manifest_path);
  }
}

// ------------------------------------------------------------------ probe

struct ProbeCmdOptions {
  std::string config;
  std::string checkpoint;
  std::vector<std::string> valid_bitexts;
  std::vector<std::string> valid_align_files;
  std::string granularity = "sentence";
  std::string scope;
  std::size_t budget = 0;
  std::string out;
  CLI::App* app = nullptr;
};

void cmd_probe(const ProbeCmdOptions& o, Io& io) {
  Manifest m("probe", io.argv);
  m.set_output_flag("--out", o.out);
  RunConfig cfg = load_config(o.config, m);
  if (o.app->count("--scope")) cfg.eval.scope = parse_scope(o.scope);
  if (o.app->count("--budget")) cfg.eval.probe_budget = o.budget;
  cfg.validate();
  const Granularity g = parse_granularity(o.granularity);
  m.set_config({{"eval", cfg.to_json()["eval"]}, {"granularity", to_string(g)}});
  m.set_seed(cfg.seed);
  if (g == Granularity::kWord && o.valid_align_files.empty()) {
    throw ConfigError("word granularity needs --valid-align-file");
  }
  LoadedModel lm = load_model(o.checkpoint, m);
  ParallelCorpus valid =
      build_corpus(attach(load_bitexts(o.valid_bitexts, m, "valid"), o.valid_align_files, m, "valid_align"), lm.vocab,
                   false);
  for (const auto& [name, ps] : valid.by_pair) {
    if (ps.size() < 2) throw ConfigError("probe needs at least 2 pairs for " + name);
  }
  RetrievalReport r = g == Granularity::kSentence
                          ? sentence_retrieval(lm.model, lm.vocab, valid, cfg.eval.scope, cfg.eval.probe_budget)
                          : word_retrieval(lm.model, lm.vocab, valid, cfg.eval.probe_budget);
  io.out << r.to_text();
  if (!o.out.empty()) {
    ensure_parent(o.out);
    write_json_file(o.out, r.to_json());
    m.add_output("report", o.out);
    io.manifest_path = output_manifest_path(o.out);
    m.write(io.manifest_path);
  }
}

// -------------------------------------------------------------- correlate

struct CorrelateCmdOptions {
  std::string runs_dir;
  std::string out;
};

struct RunMetrics {
  std::string name, mode, group;
  std::map<std::string, double> bleu, p1;
};

void cmd_correlate(const CorrelateCmdOptions& o, Io& io) {
  if (!fs::is_directory(o.runs_dir)) throw ConfigError("'" + o.runs_dir + "' is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(o.runs_dir)) {
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<RunMetrics> runs;
  for (const auto& d : dirs) {
    nlohmann::json man = read_json_file((d / "manifest.json").string());
    if (man.value("command", "") != "train") continue;
    if (!fs::exists(d / "bleu.json") || !fs::exists(d / "probe.json")) {
      throw ConfigError("run '" + d.string() + "' lacks bleu.json or probe.json");
    }
    RunMetrics r;
    r.name = d.filename().string();
    r.mode = man["extra"].value("mode", "");
    r.group = man["extra"].value("group", "");
    const nlohmann::json bleu_report = read_json_file((d / "bleu.json").string());
    const nlohmann::json probe_report = read_json_file((d / "probe.json").string());
    for (const auto& [pair, v] : bleu_report.at("pairs").items()) {
      r.bleu[pair] = v.at("score").get<double>();
    }
    for (const auto& v : probe_report.at("pairs")) {
      r.p1[v.at("pair").get<std::string>()] = v.at("average").get<double>();
    }
    runs.push_back(std::move(r));
  }
  std::map<std::string, const RunMetrics*> baseline;
  for (const auto& r : runs) {
    if (r.mode == "nmt_only") {
      if (baseline.count(r.group)) throw ConfigError("two nmt_only runs share group " + r.group);
      baseline[r.group] = &r;
    }
  }
  std::vector<double> dbleu, dp1;
  nlohmann::json points = nlohmann::json::array();
  for (const auto& r : runs) {
    if (r.mode == "nmt_only") continue;
    auto it = baseline.find(r.group);
    if (it == baseline.end()) {
      io.err << "warning: run " << r.name << " has no nmt_only baseline; skipped\n";
      continue;
    }
    for (const auto& [pair, b] : r.bleu) {
      if (!r.p1.count(pair) || !it->second->bleu.count(pair) || !it->second->p1.count(pair)) continue;
      dbleu.push_back(b - it->second->bleu.at(pair));
      dp1.push_back(r.p1.at(pair) - it->second->p1.at(pair));
      points.push_back({{"run", r.name}, {"mode", r.mode}, {"pair", pair}, {"delta_bleu", dbleu.back()},
                        {"delta_p1", dp1.back()}});
      io.out << r.name << ' ' << pair << "  dBLEU " << fixed(dbleu.back(), 4) << "  dP@1 " << fixed(dp1.back(), 4)
             << "\n";
    }
  }
  if (dbleu.size() < 2) throw ConfigError("need at least two (run, pair) deltas to correlate");
  const double r = pearson(dbleu, dp1);
  io.out << "pearson r = " << fixed(r, 4) << " over " << dbleu.size() << " points\n";
  if (!o.out.empty()) {
    ensure_parent(o.out);
    write_json_file(o.out, {{"r", r}, {"points", points}});
  }
}

// ----------------------------------------------------------------- replay

struct ReplayCmdOptions {
  std::string manifest;
  std::string out;
};

int dispatch(const std::vector<std::string>& args, Io& io);

int cmd_replay(const ReplayCmdOptions& o, Io& io) {
  const nlohmann::json old = read_json_file(o.manifest);
  if (old.value("format", "") != "wcl-manifest") throw ConfigError("'" + o.manifest + "' is not a wcl manifest");
  std::vector<std::string> argv = old.at("argv").get<std::vector<std::string>>();
  const std::string flag = old.value("output_flag", "");
  std::string redirect;
  if (!o.out.empty()) {
    if (flag.empty()) throw ConfigError("this manifest has no output location to redirect");
    redirect = fs::absolute(o.out).string();
  }
  const fs::path here = fs::current_path();
  const fs::path cwd = old.at("cwd").get<std::string>();
  fs::current_path(cwd);
  struct Restore {
    fs::path p;
    ~Restore() { fs::current_path(p); }
  } restore{here};

  for (const auto& in : old.at("inputs")) {
    const std::string path = in.at("path");
    if (!fs::exists(path)) throw ConfigError("input '" + path + "' is missing");
    if (sha256_file(path) != in.at("sha256").get<std::string>()) {
      throw ConfigError("input '" + path + "' changed since the recorded run");
    }
  }
  if (!redirect.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
      if (argv[i] == flag) {
        argv[i + 1] = redirect;
        replaced = true;
      } else if (argv[i].rfind(flag + "=", 0) == 0) {
        argv[i] = flag + "=" + redirect;
        replaced = true;
      }
    }
    if (!replaced) throw ConfigError("recorded argv lacks " + flag);
  }
  Io inner{argv, io.out, io.err, {}};
  const int code = dispatch(argv, inner);
  if (inner.manifest_path.empty()) {
    io.err << "replay: the command wrote no manifest\n";
    return code == kExitOk ? kExitFailure : code;
  }
  const nlohmann::json fresh = read_json_file(inner.manifest_path);
  std::map<std::string, std::string> now;
  for (const auto& e : fresh.at("outputs")) now[e.at("role")] = e.at("sha256");
  std::size_t same = 0, differ = 0;
  for (const auto& e : old.at("outputs")) {
    const std::string role = e.at("role");
    auto it = now.find(role);
    if (it == now.end()) {
      io.out << "missing  " << role << "\n";
      ++differ;
    } else if (it->second != e.at("sha256").get<std::string>()) {
      io.out << "differs  " << role << "\n";
      ++differ;
    } else {
      ++same;
    }
  }
  io.out << "replay: " << same << " identical, " << differ << " different\n";
  if (code != kExitOk) return code;
  return differ == 0 ? kExitOk : kExitFailure;
}

// --------------------------------------------------------------- defaults

void cmd_defaults(Io& io) { io.out << RunConfig{}.to_json().dump(2) << "\n"; }

int dispatch(const std::vector<std::string>& args, Io& io) {
  CLI::App app{"Word-level contrastive multilingual NMT toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", WCL_VERSION);

  SynthOptions so;
  auto* synth = app.add_subcommand("synth", "Write the toy dictionary corpora (copy and reversal pairs)");
  synth->add_option("--out-dir", so.out_dir, "Output directory")->required();
  synth->add_option("--pairs", so.pairs, "Training pairs per language pair");
  synth->add_option("--valid", so.valid, "Validation pairs per language pair");
  synth->add_option("--test", so.test, "Test pairs per language pair");
  synth->add_option("--vocab", so.vocab, "Dictionary size");
  synth->add_option("--min-len", so.min_len, "Shortest sentence in words");
  synth->add_option("--max-len", so.max_len, "Longest sentence in words");
  synth->add_option("--seed", so.seed, "Random seed");

  AlignCmdOptions ao;
  auto* ea = app.add_subcommand("extract-align", "EM word alignment, Viterbi and 1-to-1 filtering");
  ao.app = ea;
  ea->add_option("--config", ao.config, "JSON config");
  ea->add_option("--bitext", ao.bitext, "prefix:src:tgt")->required();
  ea->add_option("--extra-bitext", ao.extra, "Additional EM training data, prefix:src:tgt");
  ea->add_option("--iters", ao.iters, "EM iterations");
  ea->add_option("--p0", ao.p0, "Null alignment probability");
  ea->add_option("--lambda", ao.lambda, "Diagonal tension");
  ea->add_option("--symmetrize", ao.symmetrize, "none or intersection");
  ea->add_option("--threads", ao.threads, "E-step threads");
  ea->add_option("--out", ao.out, "Pharaoh output file")->required();
  ea->add_option("--table-out", ao.table_out, "Also write the translation table TSV");

  LexiconCmdOptions lo;
  auto* el = app.add_subcommand("extract-lexicon", "Co-occurrence lexicon, pair extraction and phrase merging");
  lo.app = el;
  el->add_option("--config", lo.config, "JSON config");
  el->add_option("--bitext", lo.bitext, "prefix:src:tgt")->required();
  el->add_option("--topk", lo.topk, "Entries kept per source word");
  el->add_option("--threshold", lo.threshold, "Minimum score of an extracted pair");
  el->add_option("--alpha", lo.alpha, "Add-alpha smoothing");
  el->add_option("--out", lo.out, "Word-pair output file")->required();
  el->add_option("--lexicon-out", lo.lexicon_out, "Lexicon TSV (default <out>.lexicon.tsv)");

  TrainCmdOptions to;
  auto* tr = app.add_subcommand("train", "Train the translator, optionally with a contrastive objective");
  to.app = tr;
  tr->add_option("--config", to.config, "JSON config");
  tr->add_option("--mode", to.mode, "nmt_only, w2w, fa or sent");
  tr->add_option("--bitext", to.bitexts, "Training data, prefix:src:tgt (repeatable)")->required();
  tr->add_option("--align-file", to.align_files, "Word pairs per training bitext, same order (repeatable)");
  tr->add_option("--valid-bitext", to.valid_bitexts, "Validation data (repeatable)")->required();
  tr->add_option("--valid-align-file", to.valid_align_files, "Word pairs per validation bitext (repeatable)");
  tr->add_option("--out-dir", to.out_dir, "Run directory")->required();
  tr->add_option("--seed", to.seed, "Seed for every random stream");
  tr->add_option("--max-steps", to.max_steps, "Training steps");
  tr->add_option("--validate-every", to.validate_every, "Steps between validations");
  tr->add_option("--patience", to.patience, "Validations without improvement before stopping");
  tr->add_option("--budget", to.budget, "Tokens per batch");
  tr->add_option("--lr", to.lr, "Peak learning rate");
  tr->add_option("--warmup", to.warmup, "Warmup steps");

  EvaluateCmdOptions eo;
  auto* ev = app.add_subcommand("evaluate", "BLEU of greedy translations, with optional paired bootstrap");
  eo.app = ev;
  ev->add_option("--config", eo.config, "JSON config");
  ev->add_option("--checkpoint", eo.checkpoint, "Model checkpoint");
  ev->add_option("--test-bitext", eo.test_bitexts, "Test data, prefix:src:tgt (repeatable)")->required();
  ev->add_option("--hyp", eo.hyps, "Score these hypotheses instead of decoding (one per test bitext)");
  ev->add_option("--baseline-hyp", eo.baseline_hyps, "Baseline hypotheses (one per test bitext)");
  ev->add_option("--out", eo.out, "JSON report");
  ev->add_option("--hyp-out", eo.hyp_out, "Write hypotheses to <prefix>.<pair>");
  ev->add_option("--resamples", eo.resamples, "Bootstrap resamples");
  ev->add_option("--seed", eo.seed, "Bootstrap seed");
  ev->add_option("--max-len", eo.max_len, "Decoding length limit in subwords");

  ProbeCmdOptions po;
  auto* pr = app.add_subcommand("probe", "Sentence or word retrieval P@1");
  po.app = pr;
  pr->add_option("--config", po.config, "JSON config");
  pr->add_option("--checkpoint", po.checkpoint, "Model checkpoint")->required();
  pr->add_option("--valid-bitext", po.valid_bitexts, "Probe data (repeatable)")->required();
  pr->add_option("--valid-align-file", po.valid_align_files, "Word pairs per bitext (word granularity)");
  pr->add_option("--granularity", po.granularity, "sentence or word");
  pr->add_option("--scope", po.scope, "in_batch or full (sentence granularity)");
  pr->add_option("--budget", po.budget, "Tokens per retrieval batch");
  pr->add_option("--out", po.out, "JSON report");

  CorrelateCmdOptions co;
  auto* cr = app.add_subcommand("correlate", "Pearson r between BLEU and P@1 changes over nmt_only baselines");
  cr->add_option("--runs-dir", co.runs_dir, "Directory of run directories")->required();
  cr->add_option("--out", co.out, "JSON output");

  ReplayCmdOptions ro;
  auto* rp = app.add_subcommand("replay", "Re-run a command from its manifest and compare outputs");
  rp->add_option("--manifest", ro.manifest, "Manifest to replay")->required();
  rp->add_option("--out", ro.out, "Redirect the output location");

  app.add_subcommand("defaults", "Print the default configuration");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    io.out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    io.out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    io.out << WCL_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    io.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  if (synth->parsed()) cmd_synth(so, io);
  if (ea->parsed()) cmd_extract_align(ao, io);
  if (el->parsed()) cmd_extract_lexicon(lo, io);
  if (tr->parsed()) cmd_train(to, io);
  if (ev->parsed()) cmd_evaluate(eo, io);
  if (pr->parsed()) cmd_probe(po, io);
  if (cr->parsed()) cmd_correlate(co, io);
  if (rp->parsed()) return cmd_replay(ro, io);
  if (app.got_subcommand("defaults")) cmd_defaults(io);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Io io{args, out, err, {}};
  try {
    return dispatch(args, io);
  } catch (const ExitWith& e) {
    return e.code;
  } catch (const NumericalDivergence& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UndefinedResult& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace wcl::cli
