#pragma once

#include "cfg.hpp"
#include "elf_image.hpp"

#include <optional>

namespace ehfetch {

struct JumpTableOutcome {
    std::optional<JumpTableResolution> resolution;
    std::string reason;   // why it stayed unresolved, or a note about the table
};

/// Resolves an indirect jump that dispatches through a bounded table.
/// Works on the single-predecessor path ending at the jump: values are
/// tracked symbolically along that path (sub-registers included), the table
/// load must have the shape [CONST + index*size], and an unsigned
/// compare-with-immediate plus conditional branch on the path must bound the
/// same index value. Anything less stays unresolved.
JumpTableOutcome resolve_jump_table(const BinaryImage& img, const InsnGraph& g, const Instruction& jump);

/// Largest table the resolver will read.
inline constexpr std::uint64_t kMaxJumpTableEntries = 1u << 16;

}  // namespace ehfetch
