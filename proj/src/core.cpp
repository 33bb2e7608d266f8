#include "tagrw/core.hpp"

#include <cmath>
#include <cstdint>

namespace tagrw {
namespace {

// Decodes one UTF-8 code point starting at s[i]. Invalid bytes are consumed
// one at a time and reported as U+FFFD so tokenization is total.
uint32_t decode_utf8(std::string_view s, std::size_t& i) {
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  unsigned char b0 = byte(i);
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  int len = 0;
  uint32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    i += 1;
    return 0xFFFD;
  }
  if (i + len > s.size()) {
    i += 1;
    return 0xFFFD;
  }
  for (int k = 1; k < len; ++k) {
    unsigned char bk = byte(i + k);
    if ((bk & 0xC0) != 0x80) {
      i += 1;
      return 0xFFFD;
    }
    cp = (cp << 6) | (bk & 0x3F);
  }
  i += len;
  return cp;
}

bool is_whitespace_cp(uint32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Code points that extend the preceding grapheme cluster. Covers combining
// marks, variation selectors and emoji modifiers; enough for the scripts the
// corpora use without hauling in full UAX#29 property tables.
bool is_cluster_extend(uint32_t cp) {
  return (cp >= 0x0300 && cp <= 0x036F) || (cp >= 0x1AB0 && cp <= 0x1AFF) ||
         (cp >= 0x1DC0 && cp <= 0x1DFF) || (cp >= 0x20D0 && cp <= 0x20FF) ||
         (cp >= 0xFE00 && cp <= 0xFE0F) || (cp >= 0xFE20 && cp <= 0xFE2F) ||
         (cp >= 0x1F3FB && cp <= 0x1F3FF) || cp == 0x200D;
}

bool is_regional_indicator(uint32_t cp) { return cp >= 0x1F1E6 && cp <= 0x1F1FF; }

struct CodePoint {
  uint32_t cp;
  std::size_t offset;
  std::size_t length;
};

std::vector<CodePoint> decode_all(std::string_view text) {
  std::vector<CodePoint> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    uint32_t cp = decode_utf8(text, i);
    out.push_back({cp, start, i - start});
  }
  return out;
}

Tokens tokenize_characters(std::string_view text) {
  Tokens out;
  auto cps = decode_all(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    if (is_whitespace_cp(cps[i].cp)) {
      ++i;
      continue;
    }
    std::size_t begin = cps[i].offset;
    std::size_t end = cps[i].offset + cps[i].length;
    bool after_zwj = cps[i].cp == 0x200D;
    bool regional = is_regional_indicator(cps[i].cp);
    ++i;
    while (i < cps.size()) {
      bool extend = is_cluster_extend(cps[i].cp) || after_zwj ||
                    (regional && is_regional_indicator(cps[i].cp));
      if (!extend) break;
      after_zwj = cps[i].cp == 0x200D;
      if (regional) regional = false; // regional indicators pair up only once
      end = cps[i].offset + cps[i].length;
      ++i;
    }
    out.emplace_back(text.substr(begin, end - begin));
  }
  return out;
}

Tokens tokenize_words(std::string_view text) {
  Tokens out;
  auto cps = decode_all(text);
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_whitespace_cp(cps[i].cp)) ++i;
    if (i >= cps.size()) break;
    std::size_t begin = cps[i].offset;
    std::size_t end = begin;
    while (i < cps.size() && !is_whitespace_cp(cps[i].cp)) {
      end = cps[i].offset + cps[i].length;
      ++i;
    }
    out.emplace_back(text.substr(begin, end - begin));
  }
  return out;
}

} // namespace

Tokens tokenize(std::string_view text, TokenMode mode) {
  return mode == TokenMode::Character ? tokenize_characters(text) : tokenize_words(text);
}

std::string join_tokens(const Tokens& tokens, TokenMode mode) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && mode == TokenMode::Word) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

FlatContext flatten_context(const std::vector<Tokens>& turns) {
  FlatContext ctx;
  for (std::size_t t = 0; t < turns.size(); ++t) {
    if (turns[t].empty()) throw DataError("flatten_context: empty turn " + std::to_string(t));
    int first = static_cast<int>(ctx.tokens.size());
    for (const auto& tok : turns[t]) {
      ctx.tokens.push_back(tok);
      ctx.turn_ids.push_back(static_cast<int>(t));
    }
    ctx.turn_bounds.push_back({first, static_cast<int>(ctx.tokens.size()) - 1});
  }
  return ctx;
}

CorpusStats corpus_stats(std::span<const DialogueInstance> corpus,
                         const std::vector<bool>& coverage_flags,
                         const std::vector<bool>& no_change_flags) {
  if (corpus.empty()) throw DataError("corpus_stats: empty corpus");
  if (coverage_flags.size() != corpus.size() || no_change_flags.size() != corpus.size())
    throw DataError("corpus_stats: flag lists must match corpus length");

  CorpusStats s;
  s.n_instances = corpus.size();
  double turn_sum = 0.0, tok_sum = 0.0, tok_sq_sum = 0.0;
  std::size_t uncovered = 0, no_change = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    turn_sum += static_cast<double>(corpus[i].context_turns.size());
    double n_tok = 0.0;
    for (const auto& turn : corpus[i].context_turns) n_tok += static_cast<double>(turn.size());
    tok_sum += n_tok;
    tok_sq_sum += n_tok * n_tok;
    if (!coverage_flags[i]) ++uncovered;
    if (no_change_flags[i]) ++no_change;
  }
  const double n = static_cast<double>(corpus.size());
  s.turns_per_instance = turn_sum / n;
  s.context_tokens_mu = tok_sum / n;
  double variance = tok_sq_sum / n - s.context_tokens_mu * s.context_tokens_mu;
  s.context_tokens_sigma = std::sqrt(std::max(0.0, variance));
  s.pct_no_change = 100.0 * static_cast<double>(no_change) / n;
  s.pct_uncovered = 100.0 * static_cast<double>(uncovered) / n;
  return s;
}

} // namespace tagrw
