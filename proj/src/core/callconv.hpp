#pragma once

#include "cfg.hpp"

#include <optional>
#include <string>

namespace ehfetch {

struct CallConvViolation {
    Addr addr = 0;
    int reg = reg::none;
    std::string describe() const;
};

/// Must-initialised analysis from the entry: every register other than the
/// argument registers (rdi rsi rdx rcx r8 r9), rsp and rbp has to be written
/// before it is read. Saving a callee-saved register (push, or a store to an
/// rsp/rbp-based slot) is not a use, and reading exactly `al` is allowed
/// (it carries the vector-register count into variadic functions).
/// Returns the lowest-addressed violation, if any.
std::optional<CallConvViolation> check_calling_convention(const InsnGraph& g);

/// Same rule restricted to the straight-line run from the entry, up to and
/// including the first branch, call, return or syscall. Deeper reads are
/// often guarded by path conditions a must-analysis cannot see.
std::optional<CallConvViolation> check_entry_prefix(const InsnGraph& g);

inline bool meets_calling_convention(const InsnGraph& g) { return !check_calling_convention(g); }

/// Registers an instruction reads in the calling-convention sense.
RegSet convention_uses(const Instruction& ins);

}  // namespace ehfetch
