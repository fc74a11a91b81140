#pragma once

#include "common.hpp"
#include "elf_image.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace ehfetch {

// General-purpose registers use DWARF numbering throughout.
namespace reg {
inline constexpr int rax = 0, rdx = 1, rcx = 2, rbx = 3, rsi = 4, rdi = 5, rbp = 6, rsp = 7;
inline constexpr int r8 = 8, r9 = 9, r10 = 10, r11 = 11, r12 = 12, r13 = 13, r14 = 14, r15 = 15;
inline constexpr int rip = 16;
inline constexpr int none = -1;
}  // namespace reg

/// Bitmask over DWARF register numbers 0..16.
using RegSet = std::uint32_t;
constexpr RegSet bit(int r) { return r < 0 ? 0u : (1u << r); }
std::string reg_name(int dwarf_reg);

/// Registers an ABI call may overwrite: rax rcx rdx rsi rdi r8-r11.
constexpr RegSet kCallClobbered = bit(reg::rax) | bit(reg::rcx) | bit(reg::rdx) | bit(reg::rsi) |
                                  bit(reg::rdi) | bit(reg::r8) | bit(reg::r9) | bit(reg::r10) |
                                  bit(reg::r11);
constexpr RegSet kArgumentRegs = bit(reg::rdi) | bit(reg::rsi) | bit(reg::rdx) | bit(reg::rcx) |
                                 bit(reg::r8) | bit(reg::r9);

enum class InsnKind {
    call_direct,
    call_indirect,
    jump_direct,
    jump_conditional,
    jump_indirect,
    ret,
    halt_like,
    push,
    pop,
    sub_rsp,
    move,
    syscall,
    other,
};

enum class Op { mov, movzx, movsx, lea, xor_, and_, or_, add, sub, cmp, test, push, pop, call, jmp, jcc, ret, nop, xchg, other };

/// Conditional-jump predicate, enough to tell which edge a bound check guards.
enum class Cond { none, a, ae, b, be, e, ne, g, ge, l, le, other };

struct MemOperand {
    int base = reg::none;
    int index = reg::none;
    int scale = 1;
    std::int64_t disp = 0;
    bool rip_relative = false;
    bool segment = false;            // fs/gs override
    std::optional<Addr> absolute;    // effective address when it is a constant
};

struct Operand {
    enum class Type { reg, imm, mem } type = Type::imm;
    int reg = reg::none;
    bool high8 = false;              // ah/bh/ch/dh
    std::int64_t imm = 0;
    MemOperand mem;
    std::uint8_t size = 0;           // bytes
};

struct Instruction {
    Addr addr = 0;
    std::uint8_t length = 0;
    InsnKind kind = InsnKind::other;
    Op op = Op::other;
    Cond cond = Cond::none;
    std::optional<Addr> target;      // direct call/jump target
    std::vector<Operand> operands;   // Intel order: destination first
    RegSet reads = 0;
    RegSet writes = 0;
    std::vector<std::pair<std::int64_t, std::uint8_t>> immediates;   // (value, width)
    std::optional<MemOperand> memory_operand;
    bool zeroing_idiom = false;      // xor/sub r,r: writes without reading
    std::optional<std::int64_t> rsp_adjust;   // for sub/add rsp, imm
    std::string text;

    Addr end() const { return addr + length; }
    bool is_call() const { return kind == InsnKind::call_direct || kind == InsnKind::call_indirect; }
    bool is_branch() const {
        return kind == InsnKind::jump_direct || kind == InsnKind::jump_conditional || kind == InsnKind::jump_indirect;
    }
    /// True when control never reaches the next instruction by falling through.
    bool ends_path() const {
        return kind == InsnKind::jump_direct || kind == InsnKind::jump_indirect || kind == InsnKind::ret ||
               kind == InsnKind::halt_like;
    }
};

/// Decoding contract: pure in (bytes, addr).
class Decoder {
public:
    virtual ~Decoder() = default;
    virtual std::optional<Instruction> decode(std::span<const std::uint8_t> bytes, Addr addr) const = 0;
};

/// Capstone-backed implementation. Each thread gets its own handle.
class CapstoneDecoder final : public Decoder {
public:
    std::optional<Instruction> decode(std::span<const std::uint8_t> bytes, Addr addr) const override;
};

const Decoder& default_decoder();

/// Decodes at addr. Throws Error(out_of_range) for non-executable or unmapped
/// addresses and Error(invalid_opcode) for undecodable bytes.
Instruction decode_at(const BinaryImage& img, Addr addr, const Decoder& dec = default_decoder());

/// Memoizing front end over one image; not thread safe, use one per pipeline.
class DecodeCache {
public:
    DecodeCache(const BinaryImage& img, const Decoder& dec = default_decoder()) : img_(img), dec_(dec) {}

    /// nullptr when addr is outside executable sections or does not decode.
    const Instruction* at(Addr addr);
    const BinaryImage& image() const { return img_; }

private:
    const BinaryImage& img_;
    const Decoder& dec_;
    std::unordered_map<Addr, std::optional<Instruction>> cache_;
};

}  // namespace ehfetch
