#pragma once

#include "common.hpp"
#include "decoder.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ehfetch {

enum class Provenance { fde, call_target, pointer, tail_call };
std::string_view to_string(Provenance p);
std::optional<Provenance> provenance_from_string(std::string_view s);

enum class EdgeKind { fallthrough, jump, cond_taken, cond_fallthrough, jumptable_entry };

enum class ReturnStatus { unknown, returns, noreturn };

struct BasicBlock {
    Addr start = 0;
    Addr end = 0;
    std::vector<Instruction> instructions;
    std::vector<std::pair<Addr, EdgeKind>> successors;
};

enum class TableEntryKind { absolute, base_relative_signed };

struct JumpTableResolution {
    Addr jump_addr = 0;
    Addr base = 0;
    std::uint8_t entry_size = 8;
    int index_register = reg::none;
    std::uint64_t index_bound = 0;
    std::vector<Addr> targets;   // per entry, in table order
    TableEntryKind entry_kind = TableEntryKind::absolute;
    bool writable_table = false;
};

/// A direct jump or conditional branch leaving the function for another
/// function's start, or leaving the function's FDE range.
struct InterJump {
    Addr site = 0;
    Addr target = 0;
    bool conditional = false;
    bool to_function_start = true;
    auto operator<=>(const InterJump&) const = default;
};

struct FunctionCfg {
    Addr start = 0;
    Provenance provenance = Provenance::fde;
    std::optional<std::size_t> fde_index;
    std::vector<AddrRange> body_hints;     // FDE ranges covering this function
    std::map<Addr, BasicBlock> blocks;

    std::vector<InterJump> inter_jumps;
    std::vector<std::pair<Addr, Addr>> calls;      // (site, direct target)
    std::map<Addr, JumpTableResolution> jump_tables;
    std::vector<Addr> unresolved_jumps;
    std::vector<Addr> suppressed_fallthroughs;     // call sites to non-returning callees
    std::set<Addr> deferred_callees;               // callees whose status was unknown
    bool has_ret = false;
    bool plt_stub = false;
    std::optional<std::string> import_name;
    ReturnStatus status = ReturnStatus::unknown;

    bool contains_instruction(Addr a) const;
    std::size_t instruction_count() const;
};

struct InstrInfo {
    std::uint8_t length = 0;
    Addr owner = 0;
    bool shared = false;
};

struct FunctionSet {
    std::map<Addr, FunctionCfg> functions;
    std::map<Addr, InstrInfo> instruction_map;
    std::set<std::pair<Addr, Addr>> call_graph_edges;
    Diagnostics diagnostics;
    /// Jump sites already classified by the merge pass, so a second pass is a no-op.
    std::set<std::pair<Addr, Addr>> classified_sites;

    bool is_start(Addr a) const { return functions.count(a) != 0; }
    /// Instruction in instruction_map whose bytes cover a, if any.
    std::optional<std::pair<Addr, InstrInfo>> covering_instruction(Addr a) const;
};

/// True iff addr lies strictly inside a decoded instruction.
bool in_existing_instruction(const FunctionSet& fs, Addr addr);

/// Instruction-level control-flow view used by slicing and data-flow passes.
struct InsnGraph {
    Addr entry = 0;
    std::map<Addr, const Instruction*> insns;
    std::map<Addr, std::vector<Addr>> succs;
    std::map<Addr, std::vector<Addr>> preds;

    void add_edge(Addr from, Addr to);
};

InsnGraph build_graph(const FunctionCfg& cfg);

}  // namespace ehfetch
