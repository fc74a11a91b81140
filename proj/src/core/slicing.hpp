#pragma once

#include "cfg.hpp"

#include <vector>

namespace ehfetch {

struct SliceResult {
    std::vector<const Instruction*> instructions;   // ascending address
    bool escapes = false;   // some seed value flows in from outside the function
};

/// Instructions that define the seed registers reaching `from`, followed
/// transitively through their own register reads. Widths alias: al, ax, eax
/// and rax are one storage cell. Also pulls in instructions on the explored
/// paths that overwrite or compare a register in the slice's register
/// closure, so a bound check applied through an alias (cmp al while the
/// table index came from eax) is kept.
SliceResult backward_slice(const InsnGraph& g, Addr from, RegSet seeds);

struct ReachingDefs {
    std::vector<const Instruction*> defs;   // ascending address
    bool escapes = false;   // some path reaches the entry without a definition
};

/// Nearest writes of reg on every path reaching the point just before `at`.
ReachingDefs reaching_definitions(const InsnGraph& g, Addr at, int reg);

}  // namespace ehfetch
