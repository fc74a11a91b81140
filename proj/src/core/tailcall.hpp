#pragma once

#include "cfg.hpp"
#include "cfi.hpp"
#include "disassembler.hpp"
#include "eh_frame.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ehfetch {

enum class RefKind { call, jump, code_constant, data_word, jump_table_entry };
std::string_view to_string(RefKind k);

struct Reference {
    RefKind kind = RefKind::call;
    Addr site = 0;    // instruction or data word address
    Addr owner = 0;   // function containing the site (code references only)
    auto operator<=>(const Reference&) const = default;
};

using ReferenceIndex = std::map<Addr, std::set<Reference>>;

/// Every reference to every address: direct calls, jumps leaving a function,
/// code constants and scanned data words. Jump-table entries are indexed
/// with their own kind and never count as references to a function.
ReferenceIndex reference_index(const BinaryImage& img, const FunctionSet& fs);

struct JumpSite {
    Addr jump = 0;
    Addr owner = 0;
    Addr target = 0;
    bool conditional = false;
    std::optional<std::int64_t> stack_height;   // nullopt: no complete table
};

enum class Verdict { tail_call, merged, skipped };
std::string_view to_string(Verdict v);

struct MergeDecision {
    JumpSite site;
    Verdict verdict = Verdict::skipped;
    std::string reason;
    std::vector<Reference> target_refs;   // references to the target when decided
};

/// Unwind information the merge pass consults.
struct FrameInfo {
    std::vector<Fde> fdes;
    std::vector<StackHeightTable> heights;   // parallel to fdes

    /// Height table of the innermost FDE covering addr.
    const StackHeightTable* table_for(Addr addr) const;
};

FrameInfo build_frame_info(const EhFrame& eh);

/// Tail-call detection and merging of functions split over several FDEs.
/// For each jump leaving a function (functions ascending, jumps ascending):
///   incomplete stack height at the jump       -> skipped
///   height 0, target referenced by something other than this function's
///   jumps, target meets the calling convention -> tail_call (target kept)
///   target is a start referenced only by this jump -> merged into the owner
///   otherwise                                   -> skipped
/// Decided sites are remembered, so a second run decides nothing.
std::vector<MergeDecision> detect_and_merge(const BinaryImage& img, Disassembler& dis, const FrameInfo& frames);

struct RejectedStart {
    Addr start = 0;
    std::string reason;
};

/// Drops FDE starts whose code does not decode or breaks the calling convention.
std::vector<RejectedStart> reject_invalid_fde_starts(Disassembler& dis, DecodeCache& cache);

}  // namespace ehfetch
