#include "tagrw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "tagrw/alignment.hpp"

namespace tagrw {
namespace {

// N-grams are hashed as joined strings with an unlikely separator; token
// text never contains '\x1f'.
std::unordered_map<std::string, int> ngram_counts(const Tokens& toks, int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(toks.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (int k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += toks[i + static_cast<std::size_t>(k)];
    }
    ++counts[key];
  }
  return counts;
}

struct OrderStats {
  long long matched = 0; // clipped matches
  long long total = 0;   // candidate n-grams
};

OrderStats pair_order_stats(const Tokens& pred, const Tokens& ref, int n) {
  OrderStats s;
  auto pc = ngram_counts(pred, n);
  auto rc = ngram_counts(ref, n);
  for (const auto& [gram, cnt] : pc) {
    s.total += cnt;
    auto it = rc.find(gram);
    if (it != rc.end()) s.matched += std::min(cnt, it->second);
  }
  return s;
}

double brevity_penalty(long long pred_len, long long ref_len) {
  if (pred_len >= ref_len) return 1.0;
  if (pred_len == 0) return 0.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(pred_len));
}

// Geometric mean with uniform weights over the orders that have candidate
// n-grams; any zero numerator (after smoothing, if provided) zeroes it.
double geometric_bleu(const std::vector<double>& numer, const std::vector<double>& denom,
                      double bp) {
  double log_sum = 0.0;
  int included = 0;
  for (std::size_t i = 0; i < numer.size(); ++i) {
    if (denom[i] <= 0.0) continue; // no candidate n-grams at this order
    ++included;
    if (numer[i] <= 0.0) return 0.0;
    log_sum += std::log(numer[i] / denom[i]);
  }
  if (included == 0) return 0.0;
  return bp * std::exp(log_sum / included);
}

PRF make_prf(double overlap, double pred_total, double ref_total) {
  PRF r;
  r.precision = pred_total > 0.0 ? overlap / pred_total : 0.0;
  r.recall = ref_total > 0.0 ? overlap / ref_total : 0.0;
  r.f1 = (r.precision + r.recall) > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

} // namespace

BleuReport corpus_bleu(std::span<const Tokens> predictions, std::span<const Tokens> references,
                       int max_order) {
  if (predictions.empty()) throw DataError("corpus_bleu: empty corpus");
  if (predictions.size() != references.size())
    throw DataError("corpus_bleu: prediction/reference count mismatch");
  if (max_order < 1 || max_order > 4) throw DataError("corpus_bleu: max_order must be 1..4");

  std::array<OrderStats, 4> stats{};
  long long pred_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    pred_len += static_cast<long long>(predictions[i].size());
    ref_len += static_cast<long long>(references[i].size());
    for (int n = 1; n <= max_order; ++n) {
      OrderStats s = pair_order_stats(predictions[i], references[i], n);
      stats[static_cast<std::size_t>(n - 1)].matched += s.matched;
      stats[static_cast<std::size_t>(n - 1)].total += s.total;
    }
  }

  BleuReport rep;
  rep.brevity_penalty = brevity_penalty(pred_len, ref_len);
  for (int n = 1; n <= max_order; ++n) {
    const auto& s = stats[static_cast<std::size_t>(n - 1)];
    rep.ngram_precisions[static_cast<std::size_t>(n - 1)] =
        s.total > 0 ? static_cast<double>(s.matched) / static_cast<double>(s.total) : 0.0;
  }

  std::array<double*, 4> out{&rep.bleu1, &rep.bleu2, &rep.bleu3, &rep.bleu4};
  for (int k = 1; k <= max_order; ++k) {
    std::vector<double> numer, denom;
    for (int n = 1; n <= k; ++n) {
      numer.push_back(static_cast<double>(stats[static_cast<std::size_t>(n - 1)].matched));
      denom.push_back(static_cast<double>(stats[static_cast<std::size_t>(n - 1)].total));
    }
    *out[static_cast<std::size_t>(k - 1)] = geometric_bleu(numer, denom, rep.brevity_penalty);
  }
  return rep;
}

double sentence_bleu_smooth3(const Tokens& prediction, const Tokens& reference) {
  if (prediction.empty() || reference.empty())
    throw DataError("sentence_bleu_smooth3: empty sentence");

  std::vector<double> numer, denom;
  double invcnt = 1.0;
  for (int n = 1; n <= 4; ++n) {
    OrderStats s = pair_order_stats(prediction, reference, n);
    if (s.total == 0) {
      numer.push_back(0.0);
      denom.push_back(0.0);
      continue;
    }
    double matched = static_cast<double>(s.matched);
    if (s.matched == 0) {
      invcnt *= 2.0;
      matched = 1.0 / invcnt;
    }
    numer.push_back(matched);
    denom.push_back(static_cast<double>(s.total));
  }
  double bp = brevity_penalty(static_cast<long long>(prediction.size()),
                              static_cast<long long>(reference.size()));
  return geometric_bleu(numer, denom, bp);
}

PRF rouge_n(const Tokens& prediction, const Tokens& reference, int n) {
  if (n != 1 && n != 2) throw DataError("rouge_n: n must be 1 or 2");
  if (reference.empty()) throw DataError("rouge_n: empty reference");
  auto pc = ngram_counts(prediction, n);
  auto rc = ngram_counts(reference, n);
  double overlap = 0.0, pred_total = 0.0, ref_total = 0.0;
  for (const auto& [gram, cnt] : pc) {
    pred_total += cnt;
    auto it = rc.find(gram);
    if (it != rc.end()) overlap += std::min(cnt, it->second);
  }
  for (const auto& [gram, cnt] : rc) ref_total += cnt;
  return make_prf(overlap, pred_total, ref_total);
}

PRF rouge_l(const Tokens& prediction, const Tokens& reference) {
  if (reference.empty()) throw DataError("rouge_l: empty reference");
  double lcs = static_cast<double>(lcs_align(prediction, reference).pairs.size());
  return make_prf(lcs, static_cast<double>(prediction.size()),
                  static_cast<double>(reference.size()));
}

double exact_match(std::span<const Tokens> predictions, std::span<const Tokens> references) {
  if (predictions.empty()) throw DataError("exact_match: empty corpus");
  if (predictions.size() != references.size())
    throw DataError("exact_match: prediction/reference count mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == references[i]) ++hits;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(predictions.size());
}

} // namespace tagrw
