// LCS token alignment and closest-occurrence phrase search in a flattened
// dialogue context.
#pragma once

#include <utility>
#include <vector>

#include "tagrw/core.hpp"

namespace tagrw {

/// Ordered index pairs (input_index, reference_index), strictly increasing in
/// both coordinates; paired tokens compare equal and the pair count equals
/// the LCS length.
struct Alignment {
  std::vector<std::pair<int, int>> pairs;
};

/// Maximum-length common subsequence as index pairs. Ties are broken by a
/// fixed backtrace: take the diagonal whenever the tokens match and the
/// diagonal attains the DP value, otherwise prefer the move that decrements
/// the input index. O(|a|*|b|) time and space.
Alignment lcs_align(const Tokens& a, const Tokens& b);

/// Inclusive [start,end] into context token space, or NONE ({-1,-1}).
/// A non-NONE span never crosses a turn boundary.
struct Span {
  int start = -1;
  int end = -1;

  static Span none() { return {}; }
  bool is_none() const { return start < 0; }
  int length() const { return is_none() ? 0 : end - start + 1; }
  bool operator==(const Span&) const = default;
};

/// Occurrence of `phrase` as a contiguous run inside a single turn, choosing
/// the occurrence with the largest start index (the context precedes the
/// utterance, so the largest start is the closest one). NONE when the phrase
/// does not occur.
Span find_span(const Tokens& phrase, const FlatContext& ctx);

} // namespace tagrw
