#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "support/gen.hpp"
#include "tagrw/pipeline.hpp"

using namespace tagrw;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path dir;
  TempDir() {
    dir = fs::temp_directory_path() /
          ("tagrw_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~TempDir() { fs::remove_all(dir); }
  std::string file(const std::string& name) const { return (dir / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kWeatherCorpus =
    "{\"context\":[\"上海 最近 天气 怎么样 ？\",\"最近 经常 阴天 下雨 。\"],"
    "\"utterance\":\"冬天 就是 这样 。\",\"reference\":\"上海 冬天 就是 经常 阴天 下雨 。\"}\n";

} // namespace

TEST_CASE("corpus records read and write") {
  TempDir tmp;
  const std::string path = tmp.file("corpus.jsonl");

  SUBCASE("round trip") {
    std::vector<CorpusRecord> records;
    records.push_back({{"你好", "在 吗"}, "怎么 了", std::string("你 怎么 了")});
    records.push_back({{}, "solo", std::nullopt});
    write_corpus(path, records);
    auto back = read_corpus(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].context == records[0].context);
    CHECK(back[0].utterance == records[0].utterance);
    CHECK(back[0].reference == records[0].reference);
    CHECK(!back[1].reference.has_value());
  }
  SUBCASE("malformed line reports its number") {
    write_file(path, "{\"utterance\":\"ok\"}\nnot json at all\n");
    try {
      read_corpus(path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("empty utterance is rejected with its line") {
    write_file(path, "{\"utterance\":\"\"}\n");
    try {
      read_corpus(path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
  }
}

TEST_CASE("tag program serialization round trip") {
  std::mt19937_64 rng(15);
  for (int iter = 0; iter < 300; ++iter) {
    auto gen = tagrw::testsupport::generate_instance(rng);
    CompileResult r = compile_tags(gen.instance, gen.ctx);
    REQUIRE(is_covered(r));
    const TagProgram& program = std::get<TagProgram>(r);
    CHECK(to_program(to_tag_record(static_cast<std::size_t>(iter), program)) == program);
  }
}

TEST_CASE("annotate and apply round trip through files") {
  TempDir tmp;
  const std::string corpus = tmp.file("corpus.jsonl");
  const std::string tags = tmp.file("tags.jsonl");
  const std::string uncovered = tmp.file("uncovered.jsonl");
  const std::string out = tmp.file("out.txt");

  SUBCASE("worked dialogue, word mode") {
    write_file(corpus, kWeatherCorpus);
    AnnotateSummary summary = cmd_annotate(corpus, tags, uncovered, TokenMode::Word);
    CHECK(summary.covered == 1);
    CHECK(summary.uncovered == 0);
    cmd_apply(tags, corpus, out, TokenMode::Word);
    CHECK(read_file(out) == "上海 冬天 就是 经常 阴天 下雨 。\n");
    CHECK(read_file(uncovered).empty());
  }
  SUBCASE("uncovered instance goes to the sidecar") {
    write_file(corpus,
               "{\"context\":[\"a b\"],\"utterance\":\"x\",\"reference\":\"x ω\"}\n");
    AnnotateSummary summary = cmd_annotate(corpus, tags, uncovered, TokenMode::Word);
    CHECK(summary.covered == 0);
    CHECK(summary.uncovered == 1);
    CHECK(summary.pct_uncovered == doctest::Approx(100.0));
    CHECK(read_file(uncovered).find("ω") != std::string::npos);
    // empty tags file applies to an empty output
    cmd_apply(tags, corpus, out, TokenMode::Word);
    CHECK(read_file(out).empty());
  }
  SUBCASE("generated corpus round-trips references verbatim, char mode display") {
    std::mt19937_64 rng(33);
    std::vector<CorpusRecord> records;
    std::vector<std::string> expected;
    for (int i = 0; i < 50; ++i) {
      auto gen = tagrw::testsupport::generate_instance(rng);
      CorpusRecord rec;
      for (const auto& turn : gen.instance.context_turns)
        rec.context.push_back(join_tokens(turn, TokenMode::Word));
      rec.utterance = join_tokens(gen.instance.utterance, TokenMode::Word);
      rec.reference = join_tokens(*gen.instance.reference, TokenMode::Word);
      expected.push_back(*rec.reference);
      records.push_back(std::move(rec));
    }
    write_corpus(corpus, records);
    AnnotateSummary summary = cmd_annotate(corpus, tags, uncovered, TokenMode::Word);
    CHECK(summary.covered == 50);
    cmd_apply(tags, corpus, out, TokenMode::Word);
    std::stringstream want;
    for (const auto& line : expected) want << line << '\n';
    CHECK(read_file(out) == want.str());
  }
  SUBCASE("tag id out of range is an error") {
    write_file(corpus, kWeatherCorpus);
    write_file(tags, "{\"v\":1,\"id\":7,\"covered\":true,\"tags\":[[0,-1,-1]]}\n");
    CHECK_THROWS_AS(cmd_apply(tags, corpus, out, TokenMode::Word), DataError);
  }
  SUBCASE("annotate requires references") {
    write_file(corpus, "{\"context\":[],\"utterance\":\"hi\"}\n");
    CHECK_THROWS_AS(cmd_annotate(corpus, tags, uncovered, TokenMode::Word), DataError);
  }
  SUBCASE("coverage percentage equals check_coverage aggregated over the corpus") {
    std::string lines = kWeatherCorpus;
    lines += "{\"context\":[\"a b\"],\"utterance\":\"x\",\"reference\":\"x ω\"}\n";
    lines += "{\"context\":[\"p q\"],\"utterance\":\"r\",\"reference\":\"p r\"}\n";
    write_file(corpus, lines);
    AnnotateSummary summary = cmd_annotate(corpus, tags, uncovered, TokenMode::Word);

    std::size_t manual_uncovered = 0, total = 0;
    for (const auto& rec : read_corpus(corpus)) {
      DialogueInstance inst = to_instance(rec, TokenMode::Word);
      FlatContext ctx = flatten_context(inst.context_turns);
      if (!check_coverage(inst, ctx).covered) ++manual_uncovered;
      ++total;
    }
    CHECK(summary.uncovered == manual_uncovered);
    CHECK(summary.pct_uncovered ==
          doctest::Approx(100.0 * static_cast<double>(manual_uncovered) /
                          static_cast<double>(total)));
  }
}

TEST_CASE("eval command") {
  TempDir tmp;
  const std::string pred = tmp.file("pred.txt");
  const std::string ref = tmp.file("ref.txt");

  SUBCASE("perfect predictions score 100 everywhere") {
    write_file(pred, "冬天就是这样。\n上海下雨\n");
    write_file(ref, "冬天就是这样。\n上海下雨\n");
    EvalReport report = cmd_eval(pred, ref, TokenMode::Character);
    CHECK(report.bleu.bleu4 == doctest::Approx(1.0));
    CHECK(report.rouge1.f1 == doctest::Approx(1.0));
    CHECK(report.rouge2.f1 == doctest::Approx(1.0));
    CHECK(report.rougeL.f1 == doctest::Approx(1.0));
    CHECK(report.em == doctest::Approx(100.0));

    std::stringstream ss;
    print_eval(ss, report);
    // Table layout: BLEU1..4, R1, R2, R-L, EM
    CHECK(ss.str().find("BLEU1\tBLEU2\tBLEU3\tBLEU4\tR1\tR2\tR-L\tEM") == 0);
    CHECK(ss.str().find("100.00") != std::string::npos);
  }
  SUBCASE("line count mismatch and empty corpus throw") {
    write_file(pred, "a\nb\n");
    write_file(ref, "a\n");
    CHECK_THROWS_AS(cmd_eval(pred, ref, TokenMode::Character), DataError);
    write_file(pred, "");
    write_file(ref, "");
    CHECK_THROWS_AS(cmd_eval(pred, ref, TokenMode::Character), DataError);
  }
}

TEST_CASE("stats command") {
  TempDir tmp;
  const std::string corpus = tmp.file("corpus.jsonl");
  // 4 and 6 context tokens; one no-change instance
  write_file(corpus,
             "{\"context\":[\"a b\",\"c d\"],\"utterance\":\"x y\",\"reference\":\"x y\"}\n"
             "{\"context\":[\"a b c d e f\"],\"utterance\":\"x\",\"reference\":\"a x\"}\n");
  CorpusStats stats = cmd_stats(corpus, TokenMode::Word);
  CHECK(stats.n_instances == 2);
  CHECK(stats.context_tokens_mu == doctest::Approx(5.0));
  CHECK(stats.context_tokens_sigma == doctest::Approx(1.0));
  CHECK(stats.pct_no_change == doctest::Approx(50.0));
  CHECK(stats.pct_uncovered == doctest::Approx(0.0));

  std::stringstream ss;
  print_stats(ss, stats);
  CHECK(ss.str().find("population") != std::string::npos);
}

TEST_CASE("train then predict end to end on a tiny corpus") {
  TempDir tmp;
  const std::string corpus = tmp.file("corpus.jsonl");
  const std::string ckpt = tmp.file("model.ckpt");
  const std::string text = tmp.file("pred.txt");
  const std::string tags = tmp.file("pred_tags.jsonl");

  std::mt19937_64 rng(91);
  tagrw::testsupport::GenConfig gc;
  gc.max_turns = 2;
  gc.max_turn_len = 4;
  gc.max_utterance_len = 3;
  std::vector<CorpusRecord> records;
  for (int i = 0; i < 6; ++i) {
    auto gen = tagrw::testsupport::generate_instance(rng, gc);
    CorpusRecord rec;
    for (const auto& turn : gen.instance.context_turns)
      rec.context.push_back(join_tokens(turn, TokenMode::Word));
    rec.utterance = join_tokens(gen.instance.utterance, TokenMode::Word);
    rec.reference = join_tokens(*gen.instance.reference, TokenMode::Word);
    records.push_back(std::move(rec));
  }
  write_corpus(corpus, records);

  TrainOptions options;
  options.mode = TokenMode::Word;
  options.model.dim = 16;
  options.model.layers = 1;
  options.model.heads = 2;
  options.model.ffn_dim = 32;
  options.stage1 = {3, 4, 1e-3, 7};
  TrainSummary summary = cmd_train(corpus, ckpt, options);
  CHECK(summary.covered == 6);

  cmd_predict(ckpt, corpus, text, tags);
  const std::string text_out = read_file(text);
  CHECK(std::count(text_out.begin(), text_out.end(), '\n') == 6);
  auto tag_records = read_tags(tags);
  CHECK(tag_records.size() == 6);

  // out-of-vocabulary tokens at prediction time map to UNK and decode fine
  const std::string oov_corpus = tmp.file("oov.jsonl");
  write_file(oov_corpus,
             "{\"context\":[\"brand new words\"],\"utterance\":\"never seen\"}\n");
  const std::string oov_text = tmp.file("oov.txt");
  cmd_predict(ckpt, oov_corpus, oov_text, "");
  CHECK(!read_file(oov_text).empty());

  // deterministic given seed: retraining writes an identical checkpoint
  const std::string ckpt2 = tmp.file("model2.ckpt");
  cmd_train(corpus, ckpt2, options);
  CHECK(read_file(ckpt) == read_file(ckpt2));
}
