#include "tagrw/pipeline.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace tagrw {
namespace {

using nlohmann::json;

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

json parse_line(const std::string& line, const std::string& path, std::size_t lineno) {
  try {
    json j = json::parse(line);
    if (!j.is_object()) throw DataError("record is not a JSON object");
    if (j.contains("v") && j["v"].get<int>() != kSchemaVersion)
      throw DataError("unsupported schema version");
    return j;
  } catch (const std::exception& e) {
    throw DataError(path + " line " + std::to_string(lineno) + ": " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  return out;
}

struct CompiledCorpus {
  std::vector<RlExample> examples; // covered instances, ready for training
  std::size_t uncovered = 0;
};

CompiledCorpus compile_corpus(const std::vector<CorpusRecord>& records, TokenMode mode,
                              const std::string& path) {
  CompiledCorpus out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].reference)
      throw DataError(path + " line " + std::to_string(i + 1) + ": record has no reference");
    DialogueInstance inst = to_instance(records[i], mode);
    FlatContext ctx = flatten_context(inst.context_turns);
    CompileResult result = compile_tags(inst, ctx);
    if (!is_covered(result)) {
      ++out.uncovered;
      continue;
    }
    RlExample ex;
    ex.gold = std::get<TagProgram>(std::move(result));
    ex.utterance = inst.utterance;
    ex.reference = *inst.reference;
    ex.ctx = std::move(ctx);
    // input ids are filled after the vocabulary is closed
    out.examples.push_back(std::move(ex));
  }
  return out;
}

Vocab build_vocab(const std::vector<RlExample>& examples) {
  Vocab vocab;
  for (const auto& ex : examples) {
    for (const auto& tok : ex.ctx.tokens) vocab.add(tok);
    for (const auto& tok : ex.utterance) vocab.add(tok);
  }
  return vocab;
}

} // namespace

std::vector<CorpusRecord> read_corpus(const std::string& path) {
  std::vector<CorpusRecord> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j = parse_line(lines[i], path, i + 1);
    CorpusRecord rec;
    try {
      if (j.contains("context")) rec.context = j["context"].get<std::vector<std::string>>();
      rec.utterance = j.at("utterance").get<std::string>();
      if (j.contains("reference") && !j["reference"].is_null())
        rec.reference = j["reference"].get<std::string>();
    } catch (const std::exception& e) {
      throw DataError(path + " line " + std::to_string(i + 1) + ": " + e.what());
    }
    if (rec.utterance.empty())
      throw DataError(path + " line " + std::to_string(i + 1) + ": empty utterance");
    out.push_back(std::move(rec));
  }
  return out;
}

void write_corpus(const std::string& path, std::span<const CorpusRecord> records) {
  auto out = open_out(path);
  for (const auto& rec : records) {
    json j;
    j["v"] = kSchemaVersion;
    j["context"] = rec.context;
    j["utterance"] = rec.utterance;
    if (rec.reference) j["reference"] = *rec.reference;
    out << j.dump() << '\n';
  }
}

DialogueInstance to_instance(const CorpusRecord& record, TokenMode mode) {
  DialogueInstance inst;
  for (const auto& turn : record.context) {
    Tokens toks = tokenize(turn, mode);
    if (!toks.empty()) inst.context_turns.push_back(std::move(toks));
  }
  inst.utterance = tokenize(record.utterance, mode);
  if (inst.utterance.empty()) throw DataError("utterance tokenized to nothing");
  if (record.reference) {
    inst.reference = tokenize(*record.reference, mode);
    if (inst.reference->empty()) throw DataError("reference tokenized to nothing");
  }
  return inst;
}

TagRecord to_tag_record(std::size_t id, const TagProgram& program) {
  TagRecord rec;
  rec.id = id;
  rec.covered = true;
  for (const TokenTag& tag : program.tags)
    rec.tags.push_back({tag.deletion, tag.insertion.start, tag.insertion.end});
  return rec;
}

TagProgram to_program(const TagRecord& record) {
  TagProgram program;
  for (const auto& triple : record.tags) {
    TokenTag tag;
    tag.deletion = triple[0];
    tag.insertion = triple[1] < 0 ? Span::none() : Span{triple[1], triple[2]};
    program.tags.push_back(tag);
  }
  return program;
}

std::vector<TagRecord> read_tags(const std::string& path) {
  std::vector<TagRecord> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j = parse_line(lines[i], path, i + 1);
    TagRecord rec;
    try {
      rec.id = j.at("id").get<std::size_t>();
      rec.covered = j.value("covered", true);
      for (const auto& t : j.at("tags")) {
        auto triple = t.get<std::vector<int>>();
        if (triple.size() != 3) throw DataError("tag triple must have 3 entries");
        rec.tags.push_back({triple[0], triple[1], triple[2]});
      }
    } catch (const std::exception& e) {
      throw DataError(path + " line " + std::to_string(i + 1) + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void write_tags(const std::string& path, std::span<const TagRecord> records) {
  auto out = open_out(path);
  for (const auto& rec : records) {
    json j;
    j["v"] = kSchemaVersion;
    j["id"] = rec.id;
    j["covered"] = rec.covered;
    json tags = json::array();
    for (const auto& t : rec.tags) tags.push_back({t[0], t[1], t[2]});
    j["tags"] = std::move(tags);
    out << j.dump() << '\n';
  }
}

AnnotateSummary cmd_annotate(const std::string& corpus_path, const std::string& tags_path,
                             const std::string& uncovered_path, TokenMode mode) {
  const auto records = read_corpus(corpus_path);
  std::vector<TagRecord> tag_records;
  auto uncovered_out = open_out(uncovered_path);
  AnnotateSummary summary;

  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].reference)
      throw DataError(corpus_path + " line " + std::to_string(i + 1) + ": record has no reference");
    DialogueInstance inst = to_instance(records[i], mode);
    FlatContext ctx = flatten_context(inst.context_turns);
    CompileResult result = compile_tags(inst, ctx);
    if (is_covered(result)) {
      tag_records.push_back(to_tag_record(i, std::get<TagProgram>(result)));
      ++summary.covered;
    } else {
      json j;
      j["v"] = kSchemaVersion;
      j["id"] = i;
      j["failing_phrase"] = std::get<Uncovered>(result).failing_phrase;
      uncovered_out << j.dump() << '\n';
      ++summary.uncovered;
    }
  }
  write_tags(tags_path, tag_records);
  const std::size_t total = summary.covered + summary.uncovered;
  summary.pct_uncovered =
      total == 0 ? 0.0 : 100.0 * static_cast<double>(summary.uncovered) / static_cast<double>(total);
  return summary;
}

void cmd_apply(const std::string& tags_path, const std::string& corpus_path,
               const std::string& out_path, TokenMode mode) {
  const auto records = read_corpus(corpus_path);
  const auto tag_records = read_tags(tags_path);
  auto out = open_out(out_path);
  for (const auto& rec : tag_records) {
    if (rec.id >= records.size())
      throw DataError(tags_path + ": tag id " + std::to_string(rec.id) +
                      " has no matching corpus record");
    DialogueInstance inst = to_instance(records[rec.id], mode);
    FlatContext ctx = flatten_context(inst.context_turns);
    TagProgram program = to_program(rec);
    const auto violations = validate_program(program, inst.utterance.size(), ctx);
    if (!violations.empty())
      throw DataError(tags_path + ": tag record " + std::to_string(rec.id) + ": " +
                      violations.front());
    out << join_tokens(apply_tags(inst.utterance, ctx, program), mode) << '\n';
  }
}

TrainSummary cmd_train(const std::string& corpus_path, const std::string& checkpoint_path,
                       const TrainOptions& options) {
  const auto records = read_corpus(corpus_path);
  CompiledCorpus compiled = compile_corpus(records, options.mode, corpus_path);
  if (compiled.examples.empty()) throw DataError(corpus_path + ": no covered instances to train on");

  const Vocab vocab = build_vocab(compiled.examples);
  for (auto& ex : compiled.examples) {
    DialogueInstance inst;
    inst.utterance = ex.utterance;
    ex.input = build_model_input(inst, ex.ctx, vocab);
  }

  TaggerConfig cfg = options.model;
  cfg.mode = options.mode;
  std::vector<TrainExample> stage1;
  stage1.reserve(compiled.examples.size());
  for (const auto& ex : compiled.examples) stage1.push_back({ex.input, ex.gold});

  TrainReport report;
  TaggerParams params = train(stage1, vocab, cfg, options.stage1, &report);

  TrainSummary summary;
  summary.covered = compiled.examples.size();
  summary.uncovered = compiled.uncovered;
  summary.final_tagging_loss = report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back();

  if (options.rl_epochs > 0) {
    RLConfig rl = options.rl;
    if (rl.scorer) rl.scorer->join_mode = options.mode;
    RlTrainReport rl_report =
        rl_train(compiled.examples, params, rl, options.rl_epochs, options.stage1.batch);
    summary.rl_skipped_batches = rl_report.skipped_batches;
  }
  save_checkpoint(checkpoint_path, params);
  return summary;
}

void cmd_predict(const std::string& checkpoint_path, const std::string& corpus_path,
                 const std::string& text_path, const std::string& tags_path) {
  const TaggerParams params = load_checkpoint(checkpoint_path);
  const TokenMode mode = params.cfg.mode;
  const auto records = read_corpus(corpus_path);
  auto text_out = open_out(text_path);
  std::vector<TagRecord> tag_records;

  for (std::size_t i = 0; i < records.size(); ++i) {
    DialogueInstance inst = to_instance(records[i], mode);
    FlatContext ctx = flatten_context(inst.context_turns);
    ModelInput input = build_model_input(inst, ctx, params.vocab);
    TagDistributions dists = tag_distributions(encode(input, params), input, params);
    TagProgram program = greedy_decode(dists, input);
    text_out << join_tokens(apply_tags(inst.utterance, ctx, program), mode) << '\n';
    if (!tags_path.empty()) tag_records.push_back(to_tag_record(i, program));
  }
  if (!tags_path.empty()) write_tags(tags_path, tag_records);
}

EvalReport cmd_eval(const std::string& pred_path, const std::string& ref_path, TokenMode mode) {
  const auto pred_lines = read_lines(pred_path);
  const auto ref_lines = read_lines(ref_path);
  if (pred_lines.size() != ref_lines.size())
    throw DataError("eval: " + pred_path + " and " + ref_path + " differ in line count");
  if (pred_lines.empty()) throw DataError("eval: empty corpus");

  std::vector<Tokens> preds, refs;
  preds.reserve(pred_lines.size());
  refs.reserve(ref_lines.size());
  for (std::size_t i = 0; i < pred_lines.size(); ++i) {
    preds.push_back(tokenize(pred_lines[i], mode));
    refs.push_back(tokenize(ref_lines[i], mode));
    if (refs.back().empty())
      throw DataError(ref_path + " line " + std::to_string(i + 1) + ": empty reference");
  }

  EvalReport report;
  report.mode = mode;
  report.bleu = corpus_bleu(preds, refs, 4);
  double r1p = 0, r1r = 0, r1f = 0, r2p = 0, r2r = 0, r2f = 0, rlp = 0, rlr = 0, rlf = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    PRF r1 = rouge_n(preds[i], refs[i], 1);
    PRF r2 = rouge_n(preds[i], refs[i], 2);
    PRF rl = rouge_l(preds[i], refs[i]);
    r1p += r1.precision; r1r += r1.recall; r1f += r1.f1;
    r2p += r2.precision; r2r += r2.recall; r2f += r2.f1;
    rlp += rl.precision; rlr += rl.recall; rlf += rl.f1;
  }
  const double n = static_cast<double>(preds.size());
  report.rouge1 = {r1p / n, r1r / n, r1f / n};
  report.rouge2 = {r2p / n, r2r / n, r2f / n};
  report.rougeL = {rlp / n, rlr / n, rlf / n};
  report.em = exact_match(preds, refs);
  return report;
}

void print_eval(std::ostream& os, const EvalReport& report) {
  os << "BLEU1\tBLEU2\tBLEU3\tBLEU4\tR1\tR2\tR-L\tEM\n";
  os << std::fixed << std::setprecision(2);
  os << 100.0 * report.bleu.bleu1 << '\t' << 100.0 * report.bleu.bleu2 << '\t'
     << 100.0 * report.bleu.bleu3 << '\t' << 100.0 * report.bleu.bleu4 << '\t'
     << 100.0 * report.rouge1.f1 << '\t' << 100.0 * report.rouge2.f1 << '\t'
     << 100.0 * report.rougeL.f1 << '\t' << report.em << '\n';
  os << "(token mode: " << (report.mode == TokenMode::Character ? "char" : "word") << ")\n";
}

CorpusStats cmd_stats(const std::string& corpus_path, TokenMode mode) {
  const auto records = read_corpus(corpus_path);
  if (records.empty()) throw DataError(corpus_path + ": empty corpus");
  std::vector<DialogueInstance> instances;
  std::vector<bool> covered, no_change;
  for (const auto& rec : records) {
    DialogueInstance inst = to_instance(rec, mode);
    FlatContext ctx = flatten_context(inst.context_turns);
    if (inst.reference) {
      covered.push_back(check_coverage(inst, ctx).covered);
      no_change.push_back(*inst.reference == inst.utterance);
    } else {
      // Records without a reference cannot be uncovered and are not known to
      // be unchanged.
      covered.push_back(true);
      no_change.push_back(false);
    }
    instances.push_back(std::move(inst));
  }
  return corpus_stats(instances, covered, no_change);
}

void print_stats(std::ostream& os, const CorpusStats& stats) {
  os << std::fixed << std::setprecision(2);
  os << "instances          " << stats.n_instances << '\n'
     << "turns (mean)       " << stats.turns_per_instance << '\n'
     << "context tokens mu  " << stats.context_tokens_mu << '\n'
     << "context tokens sd  " << stats.context_tokens_sigma << " (population)\n"
     << "no-change %        " << stats.pct_no_change << '\n'
     << "uncovered %        " << stats.pct_uncovered << '\n';
}

} // namespace tagrw
