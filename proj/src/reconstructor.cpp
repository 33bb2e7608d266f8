#include "tagrw/reconstructor.hpp"

namespace tagrw {
namespace {

bool span_in_bounds(const Span& s, const FlatContext& ctx) {
  return s.start >= 0 && s.start <= s.end && s.end < static_cast<int>(ctx.size());
}

} // namespace

Tokens apply_tags(const Tokens& utterance, const FlatContext& ctx, const TagProgram& program) {
  if (program.tags.size() != utterance.size() + 1)
    throw DataError("apply_tags: program length " + std::to_string(program.tags.size()) +
                    " does not match utterance length " + std::to_string(utterance.size()));
  Tokens out;
  for (std::size_t pos = 0; pos < program.tags.size(); ++pos) {
    const TokenTag& tag = program.tags[pos];
    if (!tag.insertion.is_none()) {
      if (!span_in_bounds(tag.insertion, ctx))
        throw DataError("apply_tags: span out of bounds at position " + std::to_string(pos));
      for (int k = tag.insertion.start; k <= tag.insertion.end; ++k)
        out.push_back(ctx.tokens[static_cast<std::size_t>(k)]);
    }
    if (pos < utterance.size() && tag.deletion == 0) out.push_back(utterance[pos]);
  }
  return out;
}

std::vector<std::string> validate_program(const TagProgram& program, std::size_t utterance_len,
                                          const FlatContext& ctx) {
  std::vector<std::string> violations;
  if (program.tags.size() != utterance_len + 1) {
    violations.push_back("length mismatch: " + std::to_string(program.tags.size()) +
                         " tags for utterance of " + std::to_string(utterance_len));
    return violations;
  }
  for (std::size_t pos = 0; pos < program.tags.size(); ++pos) {
    const TokenTag& tag = program.tags[pos];
    const std::string where = " at position " + std::to_string(pos);
    if (tag.deletion != 0 && tag.deletion != 1)
      violations.push_back("deletion bit not in {0,1}" + where);
    if (pos == utterance_len && tag.deletion != 0)
      violations.push_back("END sentinel has deletion == 1");
    const Span& s = tag.insertion;
    if (s.is_none()) {
      if (s.start != -1 || s.end != -1)
        violations.push_back("malformed NONE span" + where);
      continue;
    }
    if (s.start > s.end) {
      violations.push_back("start > end" + where);
      continue;
    }
    if (s.end >= static_cast<int>(ctx.size())) {
      violations.push_back("span out of context bounds" + where);
      continue;
    }
    if (ctx.turn_ids[static_cast<std::size_t>(s.start)] !=
        ctx.turn_ids[static_cast<std::size_t>(s.end)])
      violations.push_back("span crosses a turn boundary" + where);
  }
  return violations;
}

} // namespace tagrw
