#include "tagrw/tag_compiler.hpp"

#include <functional>

namespace tagrw {
namespace {

constexpr const char* kStartSentinel = "<start>";
constexpr const char* kEndSentinel = "<end>";

Tokens with_sentinels(const Tokens& toks) {
  Tokens out;
  out.reserve(toks.size() + 2);
  out.emplace_back(kStartSentinel);
  out.insert(out.end(), toks.begin(), toks.end());
  out.emplace_back(kEndSentinel);
  return out;
}

const Tokens& require_reference(const DialogueInstance& instance) {
  if (!instance.reference || instance.reference->empty())
    throw DataError("compile_tags: instance has no reference");
  return *instance.reference;
}

Tokens slice(const Tokens& toks, int first, int last_exclusive) {
  return Tokens(toks.begin() + first, toks.begin() + last_exclusive);
}

// Walks consecutive alignment pairs and dispatches on gap emptiness:
// both empty = no change (R1); reference-only gap = omission (R2);
// input-only gap = deletion (R3); both = replacement (R4). `emit` receives
// (output_position, tag); returning the first uncovered phrase aborts.
std::optional<Tokens> traverse(const DialogueInstance& instance, const FlatContext& ctx,
                               const std::function<void(int, TokenTag)>& emit) {
  const Tokens& reference = require_reference(instance);
  const Tokens u = with_sentinels(instance.utterance);
  const Tokens r = with_sentinels(reference);
  const Alignment align = lcs_align(u, r);

  // With sentinel tokens distinct from all real tokens the first and last
  // pairs are always (0,0) and (|u|-1,|r|-1). Real tokens spelled exactly
  // like a sentinel can break that; such instances are uncovered.
  if (align.pairs.empty() || align.pairs.front() != std::pair<int, int>{0, 0} ||
      align.pairs.back() != std::pair<int, int>{static_cast<int>(u.size()) - 1,
                                                static_cast<int>(r.size()) - 1})
    return Tokens{kStartSentinel};

  for (std::size_t k = 1; k < align.pairs.size(); ++k) {
    const auto [iprev, jprev] = align.pairs[k - 1];
    const auto [icur, jcur] = align.pairs[k];
    const bool input_gap = icur > iprev + 1;
    const bool ref_gap = jcur > jprev + 1;

    Span span = Span::none();
    if (ref_gap) {
      Tokens phrase = slice(r, jprev + 1, jcur);
      span = find_span(phrase, ctx);
      if (span.is_none()) return phrase;
    }

    if (!input_gap) {
      // R1 / R2: current word kept; an omitted phrase goes in front of it.
      emit(icur - 1, TokenTag{0, span});
    } else {
      // R3 / R4: delete the gap words; a replacement phrase attaches to the
      // left-most deleted word, the rest are plain deletions.
      emit(iprev, TokenTag{1, span});
      for (int i = iprev + 1; i < icur - 1; ++i) emit(i, TokenTag{1, Span::none()});
      emit(icur - 1, TokenTag{0, Span::none()});
    }
  }
  return std::nullopt;
}

} // namespace

CompileResult compile_tags(const DialogueInstance& instance, const FlatContext& ctx) {
  TagProgram program;
  program.tags.resize(instance.utterance.size() + 1);
  auto failing = traverse(instance, ctx, [&](int pos, TokenTag tag) {
    program.tags[static_cast<std::size_t>(pos)] = tag;
  });
  if (failing) return Uncovered{std::move(*failing)};
  return program;
}

CoverageReport check_coverage(const DialogueInstance& instance, const FlatContext& ctx) {
  auto failing = traverse(instance, ctx, [](int, TokenTag) {});
  if (failing) return CoverageReport{false, std::move(failing)};
  return CoverageReport{true, std::nullopt};
}

} // namespace tagrw
