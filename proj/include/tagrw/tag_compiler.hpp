// Compiles (context, utterance, reference) triples into per-token tag
// programs by traversing the LCS alignment, or reports the instance as
// uncovered when a required phrase has no context occurrence.
#pragma once

#include <optional>
#include <variant>

#include "tagrw/alignment.hpp"
#include "tagrw/core.hpp"

namespace tagrw {

/// Per-token edit operation. The four legal shapes are:
///   {0, NONE}  no change          {0, span}  omission recall
///   {1, span}  coreference swap   {1, NONE}  pure deletion
struct TokenTag {
  int deletion = 0;
  Span insertion = Span::none();

  bool operator==(const TokenTag&) const = default;
};

/// One tag per utterance token plus a trailing END sentinel position that
/// can only carry an insertion (its deletion bit is always 0).
struct TagProgram {
  std::vector<TokenTag> tags;

  bool operator==(const TagProgram&) const = default;
};

/// Domain result for instances the tag schema cannot express: some reference
/// segment has no contiguous single-turn occurrence in the context.
struct Uncovered {
  Tokens failing_phrase;
};

using CompileResult = std::variant<TagProgram, Uncovered>;

inline bool is_covered(const CompileResult& r) { return std::holds_alternative<TagProgram>(r); }

/// Compiles the gold tag program for an instance with a reference. Both
/// utterance and reference are wrapped in <start>/<end> sentinels before
/// alignment so leading and trailing insertions compile; output indices run
/// over the real utterance tokens plus the END position.
/// Throws DataError when the reference is absent or empty.
CompileResult compile_tags(const DialogueInstance& instance, const FlatContext& ctx);

struct CoverageReport {
  bool covered = false;
  std::optional<Tokens> failing_phrase;
};

/// Coverage probe: same decision as compile_tags without building a program.
CoverageReport check_coverage(const DialogueInstance& instance, const FlatContext& ctx);

} // namespace tagrw
