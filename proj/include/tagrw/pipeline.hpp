// Corpus and tag-program file formats (line-delimited JSON) and the
// end-to-end commands behind the CLI: annotate, apply, train, predict,
// eval, stats.
#pragma once

#include <array>
#include <iosfwd>

#include "tagrw/metrics.hpp"
#include "tagrw/rl.hpp"

namespace tagrw {

constexpr int kSchemaVersion = 1;

/// On-disk dialogue record, one JSON object per line:
///   {"v":1,"context":["turn",...],"utterance":"...","reference":"..."}
/// `reference` is optional; turns are oldest first.
struct CorpusRecord {
  std::vector<std::string> context;
  std::string utterance;
  std::optional<std::string> reference;
};

std::vector<CorpusRecord> read_corpus(const std::string& path);
void write_corpus(const std::string& path, std::span<const CorpusRecord> records);

/// Tokenized view of a record; turns that tokenize to nothing are dropped.
DialogueInstance to_instance(const CorpusRecord& record, TokenMode mode);

/// On-disk tag program:
///   {"v":1,"id":0,"covered":true,"tags":[[deletion,start,end],...]}
/// with NONE spans stored as [-1,-1].
struct TagRecord {
  std::size_t id = 0;
  bool covered = true;
  std::vector<std::array<int, 3>> tags;
};

TagRecord to_tag_record(std::size_t id, const TagProgram& program);
TagProgram to_program(const TagRecord& record);
std::vector<TagRecord> read_tags(const std::string& path);
void write_tags(const std::string& path, std::span<const TagRecord> records);

struct AnnotateSummary {
  std::size_t covered = 0;
  std::size_t uncovered = 0;
  double pct_uncovered = 0.0;
};

/// Compiles every instance; covered programs go to tags_path, uncovered
/// instances (id + failing phrase) to uncovered_path. Every record must
/// carry a reference.
AnnotateSummary cmd_annotate(const std::string& corpus_path, const std::string& tags_path,
                             const std::string& uncovered_path, TokenMode mode);

/// Executes a tags file against its corpus; one joined line of text per tag
/// record, in file order.
void cmd_apply(const std::string& tags_path, const std::string& corpus_path,
               const std::string& out_path, TokenMode mode);

struct TrainOptions {
  TokenMode mode = TokenMode::Character;
  TaggerConfig model;
  TrainConfig stage1;
  int rl_epochs = 0; // stage 2 runs only when > 0
  RLConfig rl;
};

struct TrainSummary {
  std::size_t covered = 0;
  std::size_t uncovered = 0;
  double final_tagging_loss = 0.0;
  int rl_skipped_batches = 0;
};

TrainSummary cmd_train(const std::string& corpus_path, const std::string& checkpoint_path,
                       const TrainOptions& options);

/// Greedy decode for every record; rewritten text to text_path, and the
/// decoded programs to tags_path when non-empty. Tokenization mode comes
/// from the checkpoint.
void cmd_predict(const std::string& checkpoint_path, const std::string& corpus_path,
                 const std::string& text_path, const std::string& tags_path);

struct EvalReport {
  BleuReport bleu;
  PRF rouge1, rouge2, rougeL;
  double em = 0.0;
  TokenMode mode = TokenMode::Character; // reported alongside the scores
};

EvalReport cmd_eval(const std::string& pred_path, const std::string& ref_path, TokenMode mode);
/// Table layout: BLEU1..4, R1, R2, R-L, EM, all x100.
void print_eval(std::ostream& os, const EvalReport& report);

CorpusStats cmd_stats(const std::string& corpus_path, TokenMode mode);
void print_stats(std::ostream& os, const CorpusStats& stats);

} // namespace tagrw
