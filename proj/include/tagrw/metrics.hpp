// Automatic evaluation: corpus BLEU-1..4, smoothing-3 sentence BLEU,
// ROUGE-1/2/L, sentence-level exact match. Scores live in [0,1]; the CLI
// multiplies by 100 for display.
#pragma once

#include <array>
#include <span>

#include "tagrw/core.hpp"

namespace tagrw {

struct BleuReport {
  double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
  double brevity_penalty = 1.0;
  std::array<double, 4> ngram_precisions{0.0, 0.0, 0.0, 0.0}; // modified p_n per order

  double bleu(int order) const {
    const std::array<double, 4> v{bleu1, bleu2, bleu3, bleu4};
    return v[static_cast<std::size_t>(order - 1)];
  }
};

/// Papineni-style corpus BLEU with clipped counts aggregated over the corpus
/// and BP = exp(1 - r/c) for c < r. A zero precision at any order zeroes the
/// geometric mean (no corpus-level smoothing); orders for which no candidate
/// has any n-gram contribute no term. Empty corpus or length mismatch raises
/// DataError.
BleuReport corpus_bleu(std::span<const Tokens> predictions, std::span<const Tokens> references,
                       int max_order = 4);

/// BLEU-4 on one sentence pair with Chen & Cherry smoothing method 3: a
/// counter starts at 1 and doubles at each order with zero matches, which
/// then scores 1/counter matched n-grams. Orders with no candidate n-gram
/// are skipped. Both sides must be non-empty.
double sentence_bleu_smooth3(const Tokens& prediction, const Tokens& reference);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Clipped n-gram overlap; n must be 1 or 2 and the reference non-empty.
PRF rouge_n(const Tokens& prediction, const Tokens& reference, int n);

/// LCS-based ROUGE: P = LCS/|pred|, R = LCS/|ref|, F1 harmonic.
PRF rouge_l(const Tokens& prediction, const Tokens& reference);

/// Percent of pairs with identical token sequences, in [0,100].
double exact_match(std::span<const Tokens> predictions, std::span<const Tokens> references);

} // namespace tagrw
