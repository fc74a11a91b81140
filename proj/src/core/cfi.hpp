#pragma once

#include "common.hpp"
#include "eh_frame.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ehfetch {

enum class CfiOp {
    nop,
    set_loc,
    advance_loc,
    def_cfa,
    def_cfa_sf,
    def_cfa_register,
    def_cfa_offset,
    def_cfa_offset_sf,
    def_cfa_expression,
    offset,            // also offset_extended(_sf), GNU_negative_offset_extended
    val_offset,
    restore,
    undefined,
    same_value,
    register_rule,
    expression,
    val_expression,
    remember_state,
    restore_state,
    gnu_args_size,
    other,
};

struct CfiInstruction {
    CfiOp op = CfiOp::nop;
    std::uint8_t opcode = 0;        // first byte as encoded
    bool from_cie = false;
    std::uint64_t reg = 0;
    // advance_loc: delta in bytes (already times code_align); set_loc: address;
    // def_cfa*/def_cfa_offset*: CFA offset in bytes; offset/val_offset: CFA-relative bytes.
    std::int64_t value = 0;
    std::vector<std::uint8_t> block;   // expression bytes

    bool operator==(const CfiInstruction&) const = default;
};

/// Decodes the CIE's initial instructions followed by the FDE's own.
/// Throws Error(cfi_decode) when an operand runs past its block or the
/// opcode has no known operand layout.
std::vector<CfiInstruction> decode_cfi(const Cie& cie, const Fde& fde);

/// Decodes one instruction block; `from_cie` tags the result.
std::vector<CfiInstruction> decode_cfi_block(std::span<const std::uint8_t> bytes, const Cie& cie, bool from_cie);

struct HeightEntry {
    Addr addr = 0;
    std::int64_t height = 0;
    bool operator==(const HeightEntry&) const = default;
};

struct StackHeightTable {
    Addr function_start = 0;
    std::uint64_t range = 0;
    std::vector<HeightEntry> entries;
    bool complete = true;
    std::string incompleteness_reason;
};

/// Abstractly interprets the CFI program into per-address stack heights
/// (CFA offset from rsp, minus 8).
StackHeightTable stack_heights(const Cie& cie, const Fde& fde);

/// Height in effect at addr, or nullopt when the table is incomplete.
/// Throws Error(address_out_of_fde) when addr lies outside the FDE.
std::optional<std::int64_t> height_at(const StackHeightTable& table, Addr addr);

std::string describe(const CfiInstruction& ins);

}  // namespace ehfetch
