// Executes tag programs: rebuilds the rewritten utterance from the input
// utterance, its flattened context and a per-token program.
#pragma once

#include "tagrw/tag_compiler.hpp"

namespace tagrw {

/// Left to right over positions 0..len(utterance): emit the insertion span's
/// context tokens if present, then the utterance token unless deleted. The
/// trailing END position contributes only its insertion. Structurally
/// invalid programs (bad length, bad span bounds) raise DataError; odd but
/// valid programs execute as written.
Tokens apply_tags(const Tokens& utterance, const FlatContext& ctx, const TagProgram& program);

/// Reports every structural violation without executing: length mismatch,
/// span ordering/bounds, turn-crossing spans, END deletion bit.
std::vector<std::string> validate_program(const TagProgram& program, std::size_t utterance_len,
                                          const FlatContext& ctx);

} // namespace tagrw
