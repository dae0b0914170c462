// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Criteria 5, 6, 8 and 9 drive the wcl command pipeline on
// the synthetic two-pair task; the rest call the library directly.

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "wcl/aligner.hpp"
#include "wcl/evalx.hpp"
#include "wcl/lexicon.hpp"
#include "wcl/objective.hpp"
#include "wcl/pipeline.hpp"
#include "wcl/synthetic.hpp"
#include "wcl/utf8.hpp"

using namespace wcl;
namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ------------------------------------------------------------ criterion 1

double nce(const Tensor& s, const Tensor& t, double temperature) {
  Tape tape(false);
  return word_contrastive_loss(tape, s, t, temperature).item();
}

Verdict criterion1() {
  double worst = 0;
  worst = std::max(worst, std::abs(nce(Tensor::constant({1, 4}, {0.3, -1, 2, 0.5}),
                                       Tensor::constant({1, 4}, {1, 1, -0.2, 0}), 0.2)));
  for (std::size_t n : {2, 4, 8}) {
    auto same = Tensor::constant({n, 6}, std::vector<Real>(n * 6, 0.37));
    const double expected = 2.0 * static_cast<double>(n) * std::log(static_cast<double>(n));
    worst = std::max(worst, std::abs(nce(same, same, 0.2) - expected));
  }
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0, 50);
  double worst_combine = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const double l_nmt = u(rng), l_align = u(rng), w = u(rng) / 50;
    const std::size_t b = 1 + rng() % 32, n = 1 + rng() % 64, n_t = 1 + rng() % 2048;
    const double expected = (l_nmt + w * (static_cast<double>(n_t) / (2.0 * static_cast<double>(n))) * l_align) /
                            static_cast<double>(b);
    worst_combine = std::max(worst_combine, std::abs(combine(l_nmt, l_align, b, n, n_t, w).l_total - expected));
  }
  return {worst <= 1e-9 && worst_combine <= 1e-12,
          "max |L - 2N ln N| = " + num(worst) + " (<= 1e-9), max combine error = " + num(worst_combine) +
              " (<= 1e-12)"};
}

// ------------------------------------------------------------ criterion 2

Verdict criterion2() {
  const auto t0 = Clock::now();
  auto xx = make_words(8, 0, 19), yy = make_words(8, 1, 20);
  auto syn = generate_corpus({xx, yy}, "xx", "yy", {10, 2, 5, WordOrder::kMonotone, 22});
  Vocabulary vocab = build_vocabulary({syn.bitext}, 5);
  std::vector<SentencePair> pairs;
  for (std::size_t i = 0; pairs.size() < 2 && i < syn.bitext.size(); ++i) {
    auto p = segment(syn.bitext.src_lines[i], syn.bitext.tgt_lines[i], "xx", "yy", vocab);
    if (!p) continue;
    p->alignment = to_word_pairs(syn.gold[i]);
    pairs.push_back(*p);
  }
  Batch batch = make_batch(pairs);
  ModelConfig mc;
  mc.layers_enc = mc.layers_dec = 1;
  mc.d = 8;
  mc.heads = 2;
  mc.d_ff = 12;
  mc.d_proj = 4;
  mc.dropout_nmt = mc.dropout_contrastive = 0;
  mc.max_positions = 32;
  mc.vocab_size = vocab.size();
  Transformer model(mc, 23);
  auto f = [&](Tape& tape) {
    RunContext ctx{&tape};
    std::vector<std::vector<TokenId>> src, tgt_in, targets;
    for (const auto& p : batch.pairs) {
      src.push_back(source_input(p, vocab));
      tgt_in.push_back(target_as_source_input(p, vocab));
      targets.push_back(p.tgt_subwords);
    }
    auto enc = model.encode(ctx, src);
    auto l_nmt = model.decode_loss(ctx, enc, targets, mc.label_smoothing);
    auto reps = gather_reps(tape, model, batch, enc, model.encode(ctx, tgt_in));
    auto l_align = word_contrastive_loss(tape, reps.src, reps.tgt, kDefaultTemperature);
    return combine(tape, l_nmt, l_align, batch.size(), batch.alignments.size(), batch.token_count,
                   kDefaultAlignWeight);
  };
  // Every parameter of the model, encoder, decoder, head and embedding.
  std::vector<Tensor> inputs;
  for (const auto& [name, t] : model.parameters()) inputs.push_back(t);
  GradCheckOptions opts;
  opts.tolerance = 1e-4;
  auto r = grad_check(f, inputs, opts);
  const double secs = seconds_since(t0);
  return {r.passed && r.finite && secs < 60.0 && batch.alignments.size() >= 2,
          std::to_string(r.checked) + " entries, max rel error " + num(r.max_rel_error) + " (<= 1e-4), " +
              std::to_string(batch.alignments.size()) + " aligned pairs, " + num(secs, 3) + " s (< 60 s)"};
}

// ---------------------------------------------------------- criteria 3, 4

struct Monotone200 {
  std::vector<std::string> xx, yy;
  SyntheticCorpus syn;
};

Monotone200 monotone_corpus() {
  Monotone200 m{make_words(50, 0, 301), make_words(50, 1, 302), {}};
  m.syn = generate_corpus({m.xx, m.yy}, "xx", "yy", {200, 3, 8, WordOrder::kMonotone, 303});
  return m;
}

Verdict criterion3(const Monotone200& m) {
  auto c = word_pairs_of(m.syn.bitext);
  AlignerOptions o;
  o.iterations = 5;
  o.lambda = 4.0;
  o.p0 = 0.08;
  auto run = align_corpus(c, c, o);
  std::size_t hit = 0, total = 0;
  for (std::size_t s = 0; s < m.syn.gold.size(); ++s) {
    for (const auto& l : m.syn.gold[s]) {
      ++total;
      hit += std::count(run.links[s].begin(), run.links[s].end(), l);
    }
  }
  const double recovery = static_cast<double>(hit) / static_cast<double>(total);
  const auto& ll = run.forward.log_likelihood;
  bool monotone = ll.size() == o.iterations + 1;
  for (std::size_t i = 1; i < ll.size(); ++i) monotone = monotone && ll[i] >= ll[i - 1];
  return {recovery >= 0.95 && monotone, "gold recovery " + num(recovery) + " (>= 0.95), log-likelihood " +
                                            (monotone ? "non-decreasing" : "DECREASED") + " over " +
                                            std::to_string(ll.size() - 1) + " iterations"};
}

WordPair unit_pair(std::size_t i, std::size_t j) { return {{i, i + 1}, {j, j + 1}}; }

std::vector<WordPair> random_links(std::mt19937_64& rng) {
  const std::size_t n = 1 + rng() % 14;
  std::vector<std::size_t> tgt(n);
  std::iota(tgt.begin(), tgt.end(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    if (rng() % 3 == 0) std::swap(tgt[k], tgt[rng() % n]);
  }
  std::vector<WordPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (rng() % 5 != 0) out.push_back(unit_pair(i, tgt[i]));
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

Verdict criterion4(const Monotone200& m) {
  auto lex = build_lexicon(word_pairs_of(m.syn.bitext), {});
  std::set<std::string> seen_src;
  for (const auto& line : m.syn.bitext.src_lines) {
    for (const auto& w : split_words(line)) seen_src.insert(w);
  }
  const auto dict = Dictionary{m.xx, m.yy}.forward();
  std::size_t right = 0;
  for (const auto& src : seen_src) {
    const auto* top = lex.top1(src);
    right += top && top->tgt == dict.at(src);
  }
  const double acc = static_cast<double>(right) / static_cast<double>(seen_src.size());

  std::mt19937_64 rng(404);
  const int sets = 2000;
  int idempotent = 0, maximal = 0;
  for (int k = 0; k < sets; ++k) {
    auto once = merge_phrases(random_links(rng));
    idempotent += merge_phrases(once) == once;
    maximal += is_maximal(once);
  }
  return {acc >= 0.9 && idempotent == sets && maximal == sets,
          "top-1 accuracy " + num(acc) + " over " + std::to_string(seen_src.size()) +
              " source words (>= 0.9), merge idempotent " + std::to_string(idempotent) + "/" +
              std::to_string(sets) + ", maximal " + std::to_string(maximal) + "/" + std::to_string(sets)};
}

// ------------------------------------------------------------ criterion 7

std::vector<Tokens> random_lines(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Tokens> out(n);
  for (auto& l : out) {
    const std::size_t len = 1 + rng() % 12;
    for (std::size_t k = 0; k < len; ++k) l.push_back("w" + std::to_string(rng() % 30));
  }
  return out;
}

Verdict criterion7() {
  bool identity = true;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto refs = random_lines(25, seed);
    identity = identity && bleu(refs, refs).score == 100.0;
  }
  std::size_t significant = 0;
  double min_p = 1;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    auto refs = random_lines(30, seed), hyps = random_lines(30, seed + 1000);
    auto r = bootstrap_significance(hyps, hyps, refs, 1000, seed);
    significant += r.p_value < 0.05;
    min_p = std::min(min_p, r.p_value);
  }
  const double clipped = bleu({split_words("the the the the")}, {split_words("the cat")}).score;
  const double expected = 100 * std::pow(0.25 * (1e-9 / 3) * (1e-9 / 2) * 1e-9, 0.25);
  const double err = std::abs(clipped - expected);
  return {identity && significant == 0 && err <= 1e-6,
          std::string("identity ") + (identity ? "100.0 on 20 sets" : "NOT 100") + ", A=B significant in " +
              std::to_string(significant) + "/20 (min p " + num(min_p) + "), clipped case error " + num(err) +
              " (<= 1e-6)"};
}

// ----------------------------------------------------- pipeline criteria

class Pipeline {
 public:
  explicit Pipeline(fs::path root) : root_(std::move(root)) {}

  std::string p(const std::string& rel) const { return (root_ / rel).string(); }
  std::string bitext(const std::string& name, const std::string& tgt) const {
    return p("data/" + name) + ":xx:" + tgt;
  }

  // Runs a command, capturing its output in the work directory log.
  int wcl(const std::vector<std::string>& args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    std::ofstream log(p("commands.log"), std::ios::app);
    log << "$ wcl";
    for (const auto& a : args) log << ' ' << a;
    log << "\n" << o.str() << e.str() << "exit " << code << "\n";
    if (out) *out = o.str();
    return code;
  }

  void must(const std::vector<std::string>& args) {
    if (wcl(args) != 0) throw std::runtime_error("command failed: wcl " + args[0] + " (see commands.log)");
  }

  void prepare() {
    fs::create_directories(root_);
    std::ofstream(p("toy.json")) << json{
        {"seed", 1},
        {"corpus", {{"bpe_merges", 200}}},
        {"model", {{"d", 32}, {"d_ff", 128}, {"d_proj", 8}, {"heads", 4}, {"layers_enc", 1}, {"layers_dec", 1},
                   {"dropout_nmt", 0.1}, {"dropout_contrastive", 0.0667}}},
        {"trainer", {{"budget", 512}, {"lr", 0.005}, {"warmup", 100}, {"max_steps", 3000}, {"validate_every", 300},
                     {"patience", 100}}}}
                                 .dump(2);
    must({"synth", "--out-dir", p("data"), "--pairs", "2000", "--valid", "100", "--test", "100", "--vocab", "50",
          "--min-len", "3", "--max-len", "8", "--seed", "1"});
    for (const auto& [task, tgt] : tasks_) {
      must({"extract-align", "--config", p("toy.json"), "--bitext", bitext(task + ".train", tgt), "--out",
            p("align/" + task + ".fa")});
      must({"extract-lexicon", "--config", p("toy.json"), "--bitext", bitext(task + ".train", tgt), "--out",
            p("align/" + task + ".w2w")});
      must({"extract-lexicon", "--config", p("toy.json"), "--bitext", bitext(task + ".valid", tgt), "--out",
            p("align/" + task + ".valid.w2w")});
    }
  }

  std::string run_dir(std::uint64_t seed, const std::string& mode) const {
    return p("runs/seed" + std::to_string(seed) + "_" + mode);
  }

  void train(std::uint64_t seed, const std::string& mode) {
    std::vector<std::string> args = {"train", "--config", p("toy.json"), "--mode", mode, "--seed",
                                     std::to_string(seed), "--out-dir", run_dir(seed, mode)};
    for (const auto& [task, tgt] : tasks_) {
      args.insert(args.end(), {"--bitext", bitext(task + ".train", tgt), "--valid-bitext",
                               bitext(task + ".valid", tgt), "--valid-align-file", p("align/" + task + ".valid.w2w")});
      if (mode != "nmt_only") args.insert(args.end(), {"--align-file", p("align/" + task + "." + mode)});
    }
    must(args);
  }

  void evaluate_and_probe(std::uint64_t seed, const std::string& mode) {
    const std::string dir = run_dir(seed, mode);
    std::vector<std::string> ev = {"evaluate", "--config", p("toy.json"), "--checkpoint", dir + "/checkpoint.bin",
                                   "--out", dir + "/bleu.json"};
    std::vector<std::string> pr = {"probe", "--config", p("toy.json"), "--checkpoint", dir + "/checkpoint.bin",
                                   "--out", dir + "/probe.json"};
    for (const auto& [task, tgt] : tasks_) {
      ev.insert(ev.end(), {"--test-bitext", bitext(task + ".test", tgt)});
      pr.insert(pr.end(), {"--valid-bitext", bitext(task + ".valid", tgt)});
    }
    must(ev);
    must(pr);
  }

  std::vector<json> log(std::uint64_t seed, const std::string& mode) const {
    std::ifstream in(run_dir(seed, mode) + "/train_log.jsonl");
    std::vector<json> out;
    for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& tasks() const { return tasks_; }

 private:
  fs::path root_;
  std::vector<std::pair<std::string, std::string>> tasks_ = {{"copy", "yy"}, {"rev", "zz"}};
};

double mean_of(const json& by_pair) {
  double s = 0;
  for (const auto& [_, v] : by_pair.items()) s += v.get<double>();
  return by_pair.empty() ? 0 : s / static_cast<double>(by_pair.size());
}

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};
const std::vector<std::string> kModes = {"nmt_only", "w2w", "fa"};

Verdict criterion5(Pipeline& pl, double train_seconds) {
  int wins = 0;
  std::ostringstream detail;
  for (auto seed : kSeeds) {
    std::map<std::string, double> p1;
    for (const auto& mode : kModes) p1[mode] = mean_of(pl.log(seed, mode).back().at("word_p1"));
    const bool win = std::max(p1["w2w"], p1["fa"]) > p1["nmt_only"];
    wins += win;
    detail << " s" << seed << ":" << num(p1["nmt_only"], 3) << "/" << num(p1["w2w"], 3) << "/" << num(p1["fa"], 3);
  }
  return {wins >= 4 && train_seconds < 3600.0,
          "contrastive beats nmt_only on word P@1 for " + std::to_string(wins) + "/5 seeds (>= 4), " +
              num(train_seconds, 4) + " s of training (< 3600 s); nmt_only/w2w/fa:" + detail.str()};
}

Verdict criterion6(Pipeline& pl) {
  // The designated run is the nmt_only run at the configuration's seed; the
  // other seeds are reported alongside.
  std::ostringstream others;
  double designated = 0;
  std::size_t points = 0;
  for (auto seed : kSeeds) {
    std::vector<double> loss, p1;
    for (const auto& rec : pl.log(seed, "nmt_only")) {
      loss.push_back(rec.at("valid_nmt_loss").get<double>());
      p1.push_back(mean_of(rec.at("sentence_p1")));
    }
    const double rho = spearman(p1, loss);
    if (seed == 1) {
      designated = rho;
      points = loss.size();
    } else {
      others << " s" << seed << "=" << num(rho, 3);
    }
  }
  return {designated <= -0.7 && points >= 8, "spearman(sentence P@1, valid loss) = " + num(designated) +
                                                 " over " + std::to_string(points) +
                                                 " checkpoints (<= -0.7, >= 8); other seeds:" + others.str()};
}

Verdict criterion8(Pipeline& pl) {
  std::mt19937_64 rng(808);
  std::normal_distribution<double> g;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = g(rng);
      y[i] = 0.3 * x[i] + g(rng);
    }
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
      sxy += x[i] * y[i];
    }
    const double nn = static_cast<double>(n);
    const double brute = (nn * sxy - sx * sy) / std::sqrt((nn * sxx - sx * sx) * (nn * syy - sy * sy));
    worst = std::max(worst, std::abs(pearson(x, y) - brute));
  }

  // Run set whose BLEU gains are exactly 2.5x the P@1 gains plus a constant.
  const fs::path dir = pl.p("linear_runs");
  std::mt19937_64 r2(809);
  std::uniform_real_distribution<double> u(0, 1);
  for (int group = 0; group < 4; ++group) {
    const double base_bleu = 20 * u(r2), base_p1 = u(r2) * 0.3;
    for (const std::string mode : {"nmt_only", "w2w", "fa"}) {
      const double dp1 = mode == "nmt_only" ? 0 : u(r2) * 0.5;
      const double dbleu = mode == "nmt_only" ? 0 : 2.5 * dp1 + 1.0;
      const fs::path run = dir / ("g" + std::to_string(group) + "_" + mode);
      fs::create_directories(run);
      std::ofstream(run / "manifest.json")
          << json{{"format", "wcl-manifest"}, {"command", "train"},
                  {"extra", {{"mode", mode}, {"group", "g" + std::to_string(group)}}}};
      json bleu_report, probe_report;
      bleu_report["pairs"]["xx-yy"]["score"] = base_bleu + dbleu;
      probe_report["pairs"] = json::array({json{{"pair", "xx-yy"}, {"average", base_p1 + dp1}}});
      std::ofstream(run / "bleu.json") << bleu_report;
      std::ofstream(run / "probe.json") << probe_report;
    }
  }
  const int code = pl.wcl({"correlate", "--runs-dir", dir.string(), "--out", pl.p("linear_corr.json")});
  double r = std::nan("");
  if (code == 0) {
    std::ifstream in(pl.p("linear_corr.json"));
    r = json::parse(in).at("r").get<double>();
  }
  // The real runs, for the record.
  std::string real;
  const int real_code = pl.wcl({"correlate", "--runs-dir", pl.p("runs"), "--out", pl.p("runs_corr.json")});
  if (real_code == 0) {
    std::ifstream in(pl.p("runs_corr.json"));
    real = "; toy runs r = " + num(json::parse(in).at("r").get<double>());
  }
  return {worst <= 1e-12 && code == 0 && std::abs(r - 1.0) <= 1e-12,
          "max |pearson - raw sums| = " + num(worst) + " (<= 1e-12), correlate on linear runs r = " +
              num(r, 15) + real};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict criterion9(Pipeline& pl) {
  struct Replay {
    std::string manifest, redirect;
    std::vector<std::string> compare;  // files compared byte for byte, relative to old and new location
  };
  const std::string run = pl.run_dir(1, "fa");
  const std::vector<Replay> replays = {
      {pl.p("data/manifest.json"), pl.p("replay/data"), {"copy.train.xx", "rev.train.zz", "dict.tsv"}},
      {pl.p("align/copy.fa.manifest.json"), pl.p("replay/copy.fa"), {}},
      {pl.p("align/copy.w2w.manifest.json"), pl.p("replay/copy.w2w"), {}},
      {run + "/manifest.json", pl.p("replay/train"), {"checkpoint.bin", "last.bin", "train_log.jsonl"}},
      {run + "/bleu.json.manifest.json", pl.p("replay/bleu.json"), {}},
      {run + "/probe.json.manifest.json", pl.p("replay/probe.json"), {}},
  };
  std::size_t ok = 0, files = 0;
  std::string failures;
  for (const auto& r : replays) {
    std::string out;
    const int code = pl.wcl({"replay", "--manifest", r.manifest, "--out", r.redirect}, &out);
    bool same = code == 0 && out.find(" 0 different") != std::string::npos;
    const fs::path old_dir = fs::path(r.manifest).parent_path();
    for (const auto& f : r.compare) {
      ++files;
      same = same && slurp(old_dir / f) == slurp(fs::path(r.redirect) / f) && !slurp(old_dir / f).empty();
    }
    ok += same;
    if (!same) failures += " " + fs::path(r.manifest).filename().string();
  }
  return {ok == replays.size(), std::to_string(ok) + "/" + std::to_string(replays.size()) +
                                    " commands replayed with identical outputs (synth, extract-align, "
                                    "extract-lexicon, train, evaluate, probe), " +
                                    std::to_string(files) + " files also compared byte for byte" +
                                    (failures.empty() ? "" : "; differing:" + failures)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work_dir = (fs::temp_directory_path() / "wcl_acceptance").string();
  bool keep = false;
  app.add_option("--work-dir", work_dir, "Scratch directory for the pipeline runs");
  app.add_flag("--keep", keep, "Keep the work directory afterwards");
  CLI11_PARSE(app, argc, argv);

  int failed = 0;
  auto report = [&](int id, const std::function<Verdict()>& check) {
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << "  ["
              << num(seconds_since(t0), 3) << " s]" << std::endl;
  };

  report(1, criterion1);
  report(2, criterion2);
  const Monotone200 mono = monotone_corpus();
  report(3, [&] { return criterion3(mono); });
  report(4, [&] { return criterion4(mono); });

  fs::remove_all(work_dir);
  Pipeline pl(work_dir);
  std::string setup_error;
  double train_seconds = 0;
  try {
    pl.prepare();
    const auto t0 = Clock::now();
    for (auto seed : kSeeds) {
      for (const auto& mode : kModes) pl.train(seed, mode);
    }
    train_seconds = seconds_since(t0);
    for (auto seed : kSeeds) {
      for (const auto& mode : kModes) pl.evaluate_and_probe(seed, mode);
    }
  } catch (const std::exception& e) {
    setup_error = e.what();
  }
  auto pipeline = [&](const std::function<Verdict()>& check) -> std::function<Verdict()> {
    return [&, check] { return setup_error.empty() ? check() : Verdict{false, "pipeline failed: " + setup_error}; };
  };
  report(5, pipeline([&] { return criterion5(pl, train_seconds); }));
  report(6, pipeline([&] { return criterion6(pl); }));
  report(7, criterion7);
  report(8, pipeline([&] { return criterion8(pl); }));
  report(9, pipeline([&] { return criterion9(pl); }));

  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  if (!keep && failed == 0) fs::remove_all(work_dir);
  return failed == 0 ? 0 : 1;
}
