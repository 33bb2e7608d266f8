// End-to-end acceptance suite. Each criterion prints exactly one PASS/FAIL
// line; the exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "support/gen.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "tagrw/metrics.hpp"
#include "tagrw/pipeline.hpp"
#include "tagrw/scorer_stub.hpp"

using namespace tagrw;
namespace ts = tagrw::testsupport;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const char* id, const char* name, bool pass, const std::string& detail) {
  std::printf("%-3s %-16s %s (%s)\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// A1: 10,000 generated covered instances survive the file-level
// annotate -> apply round trip verbatim, in under a minute.
void criterion_round_trip() {
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "tagrw_acceptance";
  fs::create_directories(dir);
  const std::string corpus = (dir / "corpus.jsonl").string();
  const std::string tags = (dir / "tags.jsonl").string();
  const std::string uncovered = (dir / "uncovered.jsonl").string();
  const std::string out = (dir / "applied.txt").string();

  const int n = 10000;
  std::mt19937_64 rng(20240817);
  std::vector<CorpusRecord> records;
  std::vector<std::string> references;
  records.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto gen = ts::generate_instance(rng);
    CorpusRecord rec;
    for (const auto& turn : gen.instance.context_turns)
      rec.context.push_back(join_tokens(turn, TokenMode::Word));
    rec.utterance = join_tokens(gen.instance.utterance, TokenMode::Word);
    rec.reference = join_tokens(*gen.instance.reference, TokenMode::Word);
    references.push_back(*rec.reference);
    records.push_back(std::move(rec));
  }
  write_corpus(corpus, records);

  AnnotateSummary summary = cmd_annotate(corpus, tags, uncovered, TokenMode::Word);
  cmd_apply(tags, corpus, out, TokenMode::Word);

  std::ifstream in(out);
  std::string line;
  int matches = 0, total = 0;
  while (std::getline(in, line)) {
    if (total < n && line == references[static_cast<std::size_t>(total)]) ++matches;
    ++total;
  }
  const double secs = seconds_since(t0);
  fs::remove_all(dir);

  const bool pass = summary.covered == static_cast<std::size_t>(n) && summary.uncovered == 0 &&
                    matches == n && total == n && secs < 60.0;
  std::ostringstream detail;
  detail << matches << "/" << n << " exact, " << summary.uncovered << " uncovered, "
         << std::fixed << std::setprecision(1) << secs << "s";
  report("A1", "round-trip", pass, detail.str());
}

// A2: the worked dialogue compiles to spans [0,0] and [6,8] (0-based) and
// applies to the rewritten utterance verbatim.
void criterion_worked_example() {
  DialogueInstance inst;
  inst.context_turns = {tokenize("上海 最近 天气 怎么样 ？", TokenMode::Word),
                        tokenize("最近 经常 阴天 下雨 。", TokenMode::Word)};
  inst.utterance = tokenize("冬天 就是 这样 。", TokenMode::Word);
  inst.reference = tokenize("上海 冬天 就是 经常 阴天 下雨 。", TokenMode::Word);
  FlatContext ctx = flatten_context(inst.context_turns);

  CompileResult result = compile_tags(inst, ctx);
  bool pass = is_covered(result);
  std::string detail = "uncovered";
  if (pass) {
    const TagProgram& p = std::get<TagProgram>(result);
    const std::vector<TokenTag> want = {
        TokenTag{0, Span{0, 0}}, TokenTag{0, Span::none()}, TokenTag{1, Span{6, 8}},
        TokenTag{0, Span::none()}, TokenTag{0, Span::none()}};
    pass = p.tags == want && apply_tags(inst.utterance, ctx, p) == *inst.reference &&
           join_tokens(apply_tags(inst.utterance, ctx, p), TokenMode::Character) ==
               "上海冬天就是经常阴天下雨。";
    detail = pass ? "tags [0,0] and [6,8], rewrite verbatim" : "tag or rewrite mismatch";
  }
  report("A2", "worked-example", pass, detail);
}

// A3: DP LCS length equals exhaustive enumeration on short random pairs.
void criterion_lcs_oracle() {
  std::mt19937_64 rng(7);
  int mismatches = 0;
  const int cases = 1500;
  for (int iter = 0; iter < cases; ++iter) {
    Tokens a, b;
    const int la = static_cast<int>(rng() % 11), lb = static_cast<int>(rng() % 11);
    for (int i = 0; i < la; ++i) a.push_back(std::string(1, static_cast<char>('a' + rng() % 4)));
    for (int i = 0; i < lb; ++i) b.push_back(std::string(1, static_cast<char>('a' + rng() % 4)));
    if (static_cast<int>(lcs_align(a, b).pairs.size()) != ts::lcs_length_bruteforce(a, b))
      ++mismatches;
  }
  report("A3", "lcs-oracle", mismatches == 0,
         std::to_string(cases) + " cases, " + std::to_string(mismatches) + " mismatches");
}

// A4: BLEU implementations against the independent oracle, plus the perfect
// corpus fixed points.
void criterion_metric_oracles() {
  std::mt19937_64 rng(13);
  double worst = 0.0;
  const int cases = 800;
  for (int iter = 0; iter < cases; ++iter) {
    std::vector<Tokens> preds, refs;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) {
      Tokens p, r;
      const int lp = 1 + static_cast<int>(rng() % 9), lr2 = 1 + static_cast<int>(rng() % 9);
      for (int k = 0; k < lp; ++k) p.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
      for (int k = 0; k < lr2; ++k) r.push_back(std::string(1, static_cast<char>('a' + rng() % 3)));
      preds.push_back(std::move(p));
      refs.push_back(std::move(r));
    }
    worst = std::max(worst, std::abs(corpus_bleu(preds, refs, 4).bleu4 -
                                     ts::oracle_corpus_bleu(preds, refs, 4)));
    worst = std::max(worst, std::abs(sentence_bleu_smooth3(preds[0], refs[0]) -
                                     ts::oracle_sentence_bleu3(preds[0], refs[0])));
  }

  std::vector<Tokens> same{{"你", "好", "吗"}, {"a", "b", "c", "d"}};
  BleuReport perfect = corpus_bleu(same, same, 4);
  const bool fixed_points = perfect.bleu4 == 1.0 && exact_match(same, same) == 100.0 &&
                            rouge_n(same[0], same[0], 1).f1 == 1.0 &&
                            rouge_n(same[1], same[1], 2).f1 == 1.0 &&
                            rouge_l(same[0], same[0]).f1 == 1.0;

  std::ostringstream detail;
  detail << cases << " pairs, max |delta| " << std::scientific << std::setprecision(2) << worst;
  report("A4", "metric-oracles", worst < 1e-9 && fixed_points, detail.str());
}

struct OverfitScore {
  double tag_accuracy = 0.0;
  double instance_em = 0.0;
};

OverfitScore score_decode(const TaggerParams& params, const std::vector<RlExample>& corpus) {
  OverfitScore s;
  long correct = 0, total = 0;
  int em = 0;
  for (const RlExample& ex : corpus) {
    TagDistributions d = tag_distributions(encode(ex.input, params), ex.input, params);
    TagProgram p = greedy_decode(d, ex.input);
    for (std::size_t i = 0; i < p.tags.size(); ++i) {
      ++total;
      if (p.tags[i] == ex.gold.tags[i]) ++correct;
    }
    if (apply_tags(ex.utterance, ex.ctx, p) == ex.reference) ++em;
  }
  s.tag_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(total);
  s.instance_em = 100.0 * static_cast<double>(em) / static_cast<double>(corpus.size());
  return s;
}

// A5: d=64, L=2 tagger overfits a 50-instance synthetic corpus to >=95%
// token-tag accuracy and >=90% instance exact match within 5 minutes.
void criterion_overfit() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen_rng(4242);
  ts::GenConfig gc;
  gc.max_turns = 2;
  gc.max_turn_len = 6;
  gc.max_utterance_len = 5;
  gc.max_phrase_len = 3;

  Vocab vocab;
  std::vector<ts::GeneratedInstance> gens;
  for (int i = 0; i < 50; ++i) {
    auto g = ts::generate_instance(gen_rng, gc);
    for (const auto& tok : g.ctx.tokens) vocab.add(tok);
    for (const auto& tok : g.instance.utterance) vocab.add(tok);
    gens.push_back(std::move(g));
  }
  std::vector<RlExample> corpus;
  std::vector<TrainExample> examples;
  for (auto& g : gens) {
    CompileResult r = compile_tags(g.instance, g.ctx);
    if (!is_covered(r)) continue;
    RlExample ex;
    ex.input = build_model_input(g.instance, g.ctx, vocab);
    ex.gold = std::get<TagProgram>(std::move(r));
    ex.utterance = g.instance.utterance;
    ex.ctx = g.ctx;
    ex.reference = *g.instance.reference;
    examples.push_back({ex.input, ex.gold});
    corpus.push_back(std::move(ex));
  }

  TaggerConfig cfg; // defaults: d=64, L=2, 4 heads, ffn 256
  TaggerParams params = TaggerParams::init(cfg, vocab, 11);
  AdamState adam(params);
  std::mt19937_64 rng(11 ^ 0x9e3779b97f4a7c15ULL);

  OverfitScore score;
  int epochs = 0;
  while (epochs < 600 && seconds_since(t0) < 270.0) {
    train_more(params, adam, examples, 20, 16, 1e-3, rng);
    epochs += 20;
    score = score_decode(params, corpus);
    if (score.tag_accuracy >= 95.0 && score.instance_em >= 90.0) break;
  }
  const double secs = seconds_since(t0);
  const bool pass = score.tag_accuracy >= 95.0 && score.instance_em >= 90.0 && secs < 300.0;
  std::ostringstream detail;
  detail << std::fixed << std::setprecision(1) << score.tag_accuracy << "% tags, "
         << score.instance_em << "% EM after " << epochs << " epochs, " << secs << "s";
  report("A5", "toy-overfit", pass, detail.str());
}

// A6: analytic gradients match central differences for every tensor.
void criterion_gradient_check() {
  ts::TinyFixture fx;
  auto result = ts::gradient_check(fx.input, fx.gold, fx.params);
  std::ostringstream detail;
  detail << result.elements << " elements, max rel err " << std::scientific
         << std::setprecision(2) << result.max_rel_err << " (worst: " << result.worst_tensor
         << ")";
  report("A6", "gradient-check", result.max_rel_err < 1e-4, detail.str());
}

// A7: REINFORCE contracts: zero loss and gradient at equal rewards, the
// one-step sign test, and the lambda=0.5 affine identity.
void criterion_rl_contracts() {
  bool pass = rl_loss(0.4, 0.4, -2.5) == 0.0;
  std::string why = pass ? "" : "rl_loss not zero at equal rewards";

  // sign test on a 2-parameter softmax policy
  auto one_step = [](double rg, double rs) {
    Matrix theta(1, 2);
    theta << 0.3, -0.2;
    Matrix grad = Matrix::Zero(1, 2);
    {
      nn::Tape t;
      nn::NodeId lp = t.log_softmax_rows(t.leaf(theta, &grad), Matrix::Zero(1, 2));
      t.backward(t.scale(t.pick_sum(lp, {1}), rg - rs));
    }
    auto p1 = [](const Matrix& th) {
      return std::exp(th(0, 1)) / (std::exp(th(0, 0)) + std::exp(th(0, 1)));
    };
    Matrix after = theta - 0.05 * grad;
    return std::pair<double, Matrix>{p1(after) - p1(theta), grad};
  };
  auto [up, g_up] = one_step(0.1, 0.9);
  auto [down, g_down] = one_step(0.9, 0.1);
  auto [flat, g_flat] = one_step(0.6, 0.6);
  if (pass && !(up > 0.0 && down < 0.0)) {
    pass = false;
    why = "sign test failed";
  }
  if (pass && !(flat == 0.0 && g_flat(0, 0) == 0.0 && g_flat(0, 1) == 0.0)) {
    pass = false;
    why = "gradient not identically zero at equal rewards";
  }
  (void)g_up;
  (void)g_down;

  // lambda = 0.5 combined loss equals the mean of the two losses
  Vocab vocab;
  std::mt19937_64 rng(3);
  ts::GenConfig gc;
  gc.max_turns = 2;
  gc.max_turn_len = 4;
  gc.max_utterance_len = 3;
  std::vector<ts::GeneratedInstance> gens;
  for (int i = 0; i < 4; ++i) {
    auto g = ts::generate_instance(rng, gc);
    for (const auto& tok : g.ctx.tokens) vocab.add(tok);
    for (const auto& tok : g.instance.utterance) vocab.add(tok);
    gens.push_back(std::move(g));
  }
  std::vector<RlExample> corpus;
  for (auto& g : gens) {
    CompileResult r = compile_tags(g.instance, g.ctx);
    if (!is_covered(r)) continue;
    RlExample ex;
    ex.input = build_model_input(g.instance, g.ctx, vocab);
    ex.gold = std::get<TagProgram>(std::move(r));
    ex.utterance = g.instance.utterance;
    ex.ctx = g.ctx;
    ex.reference = *g.instance.reference;
    corpus.push_back(std::move(ex));
  }
  TaggerConfig cfg;
  cfg.dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn_dim = 32;
  TaggerParams params = TaggerParams::init(cfg, vocab, 5);
  TaggerParams grads = TaggerParams::zeros_like(params);
  AdamState adam(params);
  RLConfig rl;
  rl.lambda = 0.5;
  rl.kind = RewardKind::Bleu;
  std::mt19937_64 step_rng(9);
  RlStepReport rep = combined_step(corpus, params, grads, adam, rl, step_rng);
  if (pass && rep.loss_combined != 0.5 * (rep.loss_tagging + rep.loss_rl)) {
    pass = false;
    why = "lambda=0.5 combined loss is not the exact mean";
  }
  report("A7", "rl-contracts", pass, pass ? "zero-advantage, sign test, affine mix" : why);
}

// A8: greedy span decoding equals brute-force enumeration on fuzzed
// distributions with context length <= 20.
void criterion_decoder_oracle() {
  std::mt19937_64 rng(2718);
  int mismatches = 0;
  const int cases = 1200;
  for (int iter = 0; iter < cases; ++iter) {
    const int c1 = 1 + static_cast<int>(rng() % 10);
    const int c2 = 1 + static_cast<int>(rng() % 10);
    DialogueInstance inst;
    Tokens t1, t2;
    for (int k = 0; k < c1; ++k) t1.push_back("c" + std::to_string(k));
    for (int k = 0; k < c2; ++k) t2.push_back("d" + std::to_string(k));
    inst.context_turns = {t1, t2};
    inst.utterance = {"u0", "u1"};
    Vocab vocab;
    for (const auto& tok : t1) vocab.add(tok);
    for (const auto& tok : t2) vocab.add(tok);
    vocab.add("u0");
    vocab.add("u1");
    FlatContext ctx = flatten_context(inst.context_turns);
    ModelInput input = build_model_input(inst, ctx, vocab);

    std::uniform_real_distribution<double> u(0.05, 1.0);
    const int n_tags = input.utterance_len + 1;
    TagDistributions d;
    d.del = Matrix::Zero(n_tags, 2);
    d.start = Matrix::Zero(n_tags, input.size());
    d.end = Matrix::Zero(n_tags, input.size());
    for (int i = 0; i < n_tags; ++i) {
      const double a = u(rng);
      d.del(i, 0) = a;
      d.del(i, 1) = 1.0 - a;
      d.start(i, 0) = u(rng);
      d.end(i, 0) = u(rng);
      for (int k = 0; k < input.context_len; ++k) {
        d.start(i, input.ctx_pos(k)) = u(rng);
        d.end(i, input.ctx_pos(k)) = u(rng);
      }
      d.start.row(i) /= d.start.row(i).sum();
      d.end.row(i) /= d.end.row(i).sum();
    }

    TagProgram p = greedy_decode(d, input);
    for (int i = 0; i < n_tags; ++i) {
      // oracle: full enumeration of (NULL,NULL) and legal in-turn pairs
      double best = d.start(i, 0) * d.end(i, 0);
      Span want = Span::none();
      for (int st = 0; st < input.context_len; ++st)
        for (int ed = st; ed < input.context_len; ++ed) {
          if (input.turn_of_position[static_cast<std::size_t>(input.ctx_pos(st))] !=
              input.turn_of_position[static_cast<std::size_t>(input.ctx_pos(ed))])
            continue;
          const double joint = d.start(i, input.ctx_pos(st)) * d.end(i, input.ctx_pos(ed));
          if (joint > best) {
            best = joint;
            want = Span{st, ed};
          }
        }
      if (!(p.tags[static_cast<std::size_t>(i)].insertion == want)) ++mismatches;
    }
  }
  report("A8", "decoder-oracle", mismatches == 0,
         std::to_string(cases) + " distributions, " + std::to_string(mismatches) +
             " mismatches");
}

// A9: the stub scorer speaks the wire protocol, lm_reward is bit-stable, and
// a dead scorer degrades RL batches to tagging-only without aborting.
void criterion_scorer_protocol() {
  bool pass = true;
  std::string why;

  ScorerServer server(StubScorer{37});
  const int port = server.start(0);
  if (port <= 0) {
    report("A9", "scorer-protocol", false, "could not bind the stub server");
    return;
  }
  LmScorerClient client;
  client.port = port;
  const double r1 = lm_reward({"你", "好", "吗"}, client);
  const double r2 = lm_reward({"你", "好", "吗"}, client);
  if (r1 != -std::log(37.0) || std::memcmp(&r1, &r2, sizeof(double)) != 0) {
    pass = false;
    why = "lm_reward not bit-reproducible -ln(perplexity)";
  }

  // build a small RL corpus and train one epoch against the live stub, then
  // one against a dead port
  Vocab vocab;
  std::mt19937_64 rng(8);
  ts::GenConfig gc;
  gc.max_turns = 2;
  gc.max_turn_len = 4;
  gc.max_utterance_len = 3;
  std::vector<RlExample> corpus;
  for (int i = 0; i < 4; ++i) {
    auto g = ts::generate_instance(rng, gc);
    for (const auto& tok : g.ctx.tokens) vocab.add(tok);
    for (const auto& tok : g.instance.utterance) vocab.add(tok);
    CompileResult r = compile_tags(g.instance, g.ctx);
    if (!is_covered(r)) continue;
    RlExample ex;
    ex.input = build_model_input(g.instance, g.ctx, vocab);
    ex.gold = std::get<TagProgram>(std::move(r));
    ex.utterance = g.instance.utterance;
    ex.ctx = g.ctx;
    ex.reference = *g.instance.reference;
    corpus.push_back(std::move(ex));
  }
  // inputs were built while the vocab was still growing; rebuild them closed
  for (auto& ex : corpus) {
    DialogueInstance inst;
    inst.utterance = ex.utterance;
    ex.input = build_model_input(inst, ex.ctx, vocab);
  }

  TaggerConfig cfg;
  cfg.dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn_dim = 32;
  TaggerParams params = TaggerParams::init(cfg, vocab, 2);

  RLConfig rl;
  rl.kind = RewardKind::ExternalLm;
  rl.scorer = client;
  rl.seed = 31;
  if (pass) {
    RlTrainReport live = rl_train(corpus, params, rl, 1, 2);
    if (live.skipped_batches != 0) {
      pass = false;
      why = "live scorer run skipped batches";
    }
  }

  server.stop();
  rl.scorer->timeout_ms = 200;
  rl.scorer->retries = 0;
  if (pass) {
    try {
      RlTrainReport dead = rl_train(corpus, params, rl, 1, 2);
      if (dead.skipped_batches == 0) {
        pass = false;
        why = "outage was not detected";
      }
    } catch (const std::exception& e) {
      pass = false;
      why = std::string("outage aborted training: ") + e.what();
    }
  }
  report("A9", "scorer-protocol", pass,
         pass ? "-ln(ppl) bit-stable, outage degrades to tagging-only" : why);
}

} // namespace

int main() {
  criterion_round_trip();
  criterion_worked_example();
  criterion_lcs_oracle();
  criterion_metric_oracles();
  criterion_overfit();
  criterion_gradient_check();
  criterion_rl_contracts();
  criterion_decoder_oracle();
  criterion_scorer_protocol();
  if (g_failures == 0)
    std::printf("all acceptance criteria passed\n");
  else
    std::printf("%d acceptance criteria FAILED\n", g_failures);
  return g_failures;
}
