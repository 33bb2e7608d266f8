// Tokenization, dialogue data model and index-space conventions shared by
// every other component. All functions here are pure and thread-safe.
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tagrw {

using Token = std::string;
using Tokens = std::vector<Token>;

enum class TokenMode { Character, Word };

/// Thrown for malformed on-disk data and contract violations on inputs.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Character mode splits into extended grapheme clusters and drops
/// whitespace; word mode splits on whitespace runs. Empty input yields an
/// empty list and no token is ever empty.
Tokens tokenize(std::string_view text, TokenMode mode);

/// Display joining: character-mode tokens concatenate with no separator,
/// word-mode tokens get single spaces. Metrics never depend on this.
std::string join_tokens(const Tokens& tokens, TokenMode mode);

/// One dialogue example: prior turns, the current utterance and, when
/// available, the human rewrite of the utterance.
struct DialogueInstance {
  std::vector<Tokens> context_turns;
  Tokens utterance;
  std::optional<Tokens> reference;
};

/// All context turns concatenated with no separator tokens. Turn identity is
/// carried per token so insertion spans index a single dense token space.
struct FlatContext {
  Tokens tokens;
  std::vector<int> turn_ids;                   // per token, non-decreasing
  std::vector<std::array<int, 2>> turn_bounds; // inclusive [first,last] per turn

  std::size_t size() const { return tokens.size(); }
};

/// Turns must be non-empty token lists (the pipeline drops turns that
/// tokenize to nothing); the turn list itself may be empty.
FlatContext flatten_context(const std::vector<Tokens>& turns);

struct CorpusStats {
  std::size_t n_instances = 0;
  double turns_per_instance = 0.0;
  double context_tokens_mu = 0.0;
  double context_tokens_sigma = 0.0; // population stddev
  double pct_no_change = 0.0;
  double pct_uncovered = 0.0;
};

/// Aggregates Table-2 style corpus statistics. All three lists must have the
/// same length; an empty corpus raises DataError.
CorpusStats corpus_stats(std::span<const DialogueInstance> corpus,
                         const std::vector<bool>& coverage_flags,
                         const std::vector<bool>& no_change_flags);

} // namespace tagrw
