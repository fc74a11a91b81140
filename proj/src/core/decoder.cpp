#include "decoder.hpp"

#include <capstone/capstone.h>

#include <array>
#include <memory>

namespace ehfetch {

namespace {

struct RegInfo {
    int dwarf = reg::none;
    std::uint8_t size = 0;
    bool high8 = false;
};

RegInfo map_reg(unsigned r) {
    switch (r) {
    case X86_REG_RAX: return {reg::rax, 8};
    case X86_REG_EAX: return {reg::rax, 4};
    case X86_REG_AX: return {reg::rax, 2};
    case X86_REG_AL: return {reg::rax, 1};
    case X86_REG_AH: return {reg::rax, 1, true};
    case X86_REG_RDX: return {reg::rdx, 8};
    case X86_REG_EDX: return {reg::rdx, 4};
    case X86_REG_DX: return {reg::rdx, 2};
    case X86_REG_DL: return {reg::rdx, 1};
    case X86_REG_DH: return {reg::rdx, 1, true};
    case X86_REG_RCX: return {reg::rcx, 8};
    case X86_REG_ECX: return {reg::rcx, 4};
    case X86_REG_CX: return {reg::rcx, 2};
    case X86_REG_CL: return {reg::rcx, 1};
    case X86_REG_CH: return {reg::rcx, 1, true};
    case X86_REG_RBX: return {reg::rbx, 8};
    case X86_REG_EBX: return {reg::rbx, 4};
    case X86_REG_BX: return {reg::rbx, 2};
    case X86_REG_BL: return {reg::rbx, 1};
    case X86_REG_BH: return {reg::rbx, 1, true};
    case X86_REG_RSI: return {reg::rsi, 8};
    case X86_REG_ESI: return {reg::rsi, 4};
    case X86_REG_SI: return {reg::rsi, 2};
    case X86_REG_SIL: return {reg::rsi, 1};
    case X86_REG_RDI: return {reg::rdi, 8};
    case X86_REG_EDI: return {reg::rdi, 4};
    case X86_REG_DI: return {reg::rdi, 2};
    case X86_REG_DIL: return {reg::rdi, 1};
    case X86_REG_RBP: return {reg::rbp, 8};
    case X86_REG_EBP: return {reg::rbp, 4};
    case X86_REG_BP: return {reg::rbp, 2};
    case X86_REG_BPL: return {reg::rbp, 1};
    case X86_REG_RSP: return {reg::rsp, 8};
    case X86_REG_ESP: return {reg::rsp, 4};
    case X86_REG_SP: return {reg::rsp, 2};
    case X86_REG_SPL: return {reg::rsp, 1};
    case X86_REG_RIP: return {reg::rip, 8};
    case X86_REG_EIP: return {reg::rip, 4};
    default: break;
    }
    static constexpr std::array<unsigned, 8> q{X86_REG_R8, X86_REG_R9, X86_REG_R10, X86_REG_R11,
                                               X86_REG_R12, X86_REG_R13, X86_REG_R14, X86_REG_R15};
    static constexpr std::array<unsigned, 8> d{X86_REG_R8D, X86_REG_R9D, X86_REG_R10D, X86_REG_R11D,
                                               X86_REG_R12D, X86_REG_R13D, X86_REG_R14D, X86_REG_R15D};
    static constexpr std::array<unsigned, 8> w{X86_REG_R8W, X86_REG_R9W, X86_REG_R10W, X86_REG_R11W,
                                               X86_REG_R12W, X86_REG_R13W, X86_REG_R14W, X86_REG_R15W};
    static constexpr std::array<unsigned, 8> b{X86_REG_R8B, X86_REG_R9B, X86_REG_R10B, X86_REG_R11B,
                                               X86_REG_R12B, X86_REG_R13B, X86_REG_R14B, X86_REG_R15B};
    for (int i = 0; i < 8; ++i) {
        if (r == q[i]) return {8 + i, 8};
        if (r == d[i]) return {8 + i, 4};
        if (r == w[i]) return {8 + i, 2};
        if (r == b[i]) return {8 + i, 1};
    }
    return {};
}

Cond map_cond(unsigned id) {
    switch (id) {
    case X86_INS_JA: return Cond::a;
    case X86_INS_JAE: return Cond::ae;
    case X86_INS_JB: return Cond::b;
    case X86_INS_JBE: return Cond::be;
    case X86_INS_JE: return Cond::e;
    case X86_INS_JNE: return Cond::ne;
    case X86_INS_JG: return Cond::g;
    case X86_INS_JGE: return Cond::ge;
    case X86_INS_JL: return Cond::l;
    case X86_INS_JLE: return Cond::le;
    default: return Cond::other;
    }
}

Op map_op(unsigned id) {
    switch (id) {
    case X86_INS_MOV:
    case X86_INS_MOVABS: return Op::mov;
    case X86_INS_MOVZX: return Op::movzx;
    case X86_INS_MOVSX:
    case X86_INS_MOVSXD: return Op::movsx;
    case X86_INS_LEA: return Op::lea;
    case X86_INS_XOR: return Op::xor_;
    case X86_INS_AND: return Op::and_;
    case X86_INS_OR: return Op::or_;
    case X86_INS_ADD: return Op::add;
    case X86_INS_SUB: return Op::sub;
    case X86_INS_CMP: return Op::cmp;
    case X86_INS_TEST: return Op::test;
    case X86_INS_PUSH: return Op::push;
    case X86_INS_POP: return Op::pop;
    case X86_INS_CALL: return Op::call;
    case X86_INS_JMP: return Op::jmp;
    case X86_INS_RET: return Op::ret;
    case X86_INS_NOP: return Op::nop;
    case X86_INS_XCHG: return Op::xchg;
    default: return Op::other;
    }
}

RegSet to_regset(const cs_regs list, std::uint8_t count) {
    RegSet s = 0;
    for (std::uint8_t i = 0; i < count; ++i) s |= bit(map_reg(list[i]).dwarf);
    return s;
}

struct Handle {
    csh h = 0;
    bool ok = false;
    Handle() {
        ok = cs_open(CS_ARCH_X86, CS_MODE_64, &h) == CS_ERR_OK;
        if (ok) cs_option(h, CS_OPT_DETAIL, CS_OPT_ON);
    }
    ~Handle() {
        if (ok) cs_close(&h);
    }
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
};

Handle& thread_handle() {
    thread_local Handle handle;
    if (!handle.ok) throw Error(ErrorCode::invalid_argument, "capstone initialisation failed");
    return handle;
}

struct InsnDeleter {
    void operator()(cs_insn* p) const { cs_free(p, 1); }
};

}  // namespace

std::string reg_name(int r) {
    static constexpr std::array<const char*, 17> names{"rax", "rdx", "rcx", "rbx", "rsi", "rdi", "rbp", "rsp", "r8",
                                                       "r9",  "r10", "r11", "r12", "r13", "r14", "r15", "rip"};
    if (r < 0 || r > 16) return "?";
    return names[static_cast<std::size_t>(r)];
}

std::optional<Instruction> CapstoneDecoder::decode(std::span<const std::uint8_t> bytes, Addr addr) const {
    if (bytes.empty()) return std::nullopt;
    Handle& handle = thread_handle();
    cs_insn* raw = nullptr;
    std::size_t n = cs_disasm(handle.h, bytes.data(), std::min<std::size_t>(bytes.size(), 15), addr, 1, &raw);
    if (n == 0) return std::nullopt;
    std::unique_ptr<cs_insn, InsnDeleter> guard(raw);
    const cs_insn& ci = *raw;
    const cs_x86& x = ci.detail->x86;

    Instruction ins;
    ins.addr = addr;
    ins.length = static_cast<std::uint8_t>(ci.size);
    ins.op = map_op(ci.id);
    ins.text = std::string(ci.mnemonic);
    if (ci.op_str[0] != '\0') ins.text += std::string(" ") + ci.op_str;

    for (std::uint8_t i = 0; i < x.op_count; ++i) {
        const cs_x86_op& o = x.operands[i];
        Operand op;
        op.size = o.size;
        if (o.type == X86_OP_REG) {
            op.type = Operand::Type::reg;
            RegInfo ri = map_reg(o.reg);
            op.reg = ri.dwarf;
            op.high8 = ri.high8;
        } else if (o.type == X86_OP_IMM) {
            op.type = Operand::Type::imm;
            op.imm = o.imm;
            ins.immediates.emplace_back(o.imm, o.size);
        } else if (o.type == X86_OP_MEM) {
            op.type = Operand::Type::mem;
            MemOperand m;
            m.segment = o.mem.segment == X86_REG_FS || o.mem.segment == X86_REG_GS;
            m.base = map_reg(o.mem.base).dwarf;
            m.index = map_reg(o.mem.index).dwarf;
            m.scale = o.mem.scale;
            m.disp = o.mem.disp;
            if (m.base == reg::rip) {
                m.rip_relative = true;
                m.base = reg::none;
                m.absolute = ins.addr + ins.length + static_cast<Addr>(m.disp);
            } else if (m.base == reg::none && m.index == reg::none && !m.segment) {
                m.absolute = static_cast<Addr>(m.disp);
            }
            op.mem = m;
            if (!ins.memory_operand) ins.memory_operand = m;
        }
        ins.operands.push_back(op);
    }

    cs_regs rd, wr;
    std::uint8_t nrd = 0, nwr = 0;
    if (cs_regs_access(handle.h, raw, rd, &nrd, wr, &nwr) == CS_ERR_OK) {
        ins.reads = to_regset(rd, nrd);
        ins.writes = to_regset(wr, nwr);
    }
    ins.reads &= ~bit(reg::rip);
    ins.writes &= ~bit(reg::rip);
    if (ins.op == Op::nop) ins.reads = ins.writes = 0;   // nopl 0(%rax) touches nothing

    // Results that do not depend on the destination's old value: xor/sub/sbb r,r
    // and or r,-1 / and r,0.
    if (ins.operands.size() == 2 && ins.operands[0].type == Operand::Type::reg) {
        const Operand& d = ins.operands[0];
        const Operand& s = ins.operands[1];
        const std::uint64_t mask = d.size >= 8 ? ~0ull : (1ull << (8 * d.size)) - 1;
        bool same_reg = s.type == Operand::Type::reg && s.reg == d.reg && s.high8 == d.high8;
        bool independent = (same_reg && (ins.op == Op::xor_ || ins.op == Op::sub || ci.id == X86_INS_SBB)) ||
                           (s.type == Operand::Type::imm &&
                            ((ins.op == Op::or_ && (static_cast<std::uint64_t>(s.imm) & mask) == mask) || (ins.op == Op::and_ && s.imm == 0)));
        if (independent && d.size >= 4) {
            ins.zeroing_idiom = true;
            ins.reads &= ~bit(d.reg);
        }
    }

    auto has_group = [&](std::uint8_t g) {
        for (std::uint8_t i = 0; i < ci.detail->groups_count; ++i)
            if (ci.detail->groups[i] == g) return true;
        return false;
    };
    auto direct_target = [&]() -> std::optional<Addr> {
        if (x.op_count == 1 && x.operands[0].type == X86_OP_IMM) return static_cast<Addr>(x.operands[0].imm);
        return std::nullopt;
    };

    if (ci.id == X86_INS_UD2 || ci.id == X86_INS_HLT || ci.id == X86_INS_INT3 || ci.id == X86_INS_UD1 ||
        ci.id == X86_INS_UD0) {
        ins.kind = InsnKind::halt_like;
    } else if (has_group(CS_GRP_CALL)) {
        ins.target = direct_target();
        ins.kind = ins.target ? InsnKind::call_direct : InsnKind::call_indirect;
    } else if (has_group(CS_GRP_RET) || ci.id == X86_INS_RET || ci.id == X86_INS_RETF || ci.id == X86_INS_IRETQ) {
        ins.kind = InsnKind::ret;
        ins.op = Op::ret;
    } else if (ci.id == X86_INS_JMP || ci.id == X86_INS_LJMP) {
        ins.target = direct_target();
        ins.kind = ins.target ? InsnKind::jump_direct : InsnKind::jump_indirect;
    } else if (has_group(CS_GRP_JUMP)) {
        ins.target = direct_target();
        ins.kind = ins.target ? InsnKind::jump_conditional : InsnKind::jump_indirect;
        ins.op = Op::jcc;
        ins.cond = map_cond(ci.id);
    } else if (ci.id == X86_INS_SYSCALL) {
        ins.kind = InsnKind::syscall;
    } else if (ins.op == Op::push) {
        ins.kind = InsnKind::push;
    } else if (ins.op == Op::pop) {
        ins.kind = InsnKind::pop;
    } else if ((ins.op == Op::sub || ins.op == Op::add) && ins.operands.size() == 2 &&
               ins.operands[0].type == Operand::Type::reg && ins.operands[0].reg == reg::rsp &&
               ins.operands[1].type == Operand::Type::imm) {
        ins.rsp_adjust = ins.op == Op::sub ? ins.operands[1].imm : -ins.operands[1].imm;
        ins.kind = ins.op == Op::sub ? InsnKind::sub_rsp : InsnKind::other;
    } else if (ins.op == Op::mov || ins.op == Op::movzx || ins.op == Op::movsx || ins.op == Op::lea ||
               ins.op == Op::xchg) {
        ins.kind = InsnKind::move;
    }
    // Branch targets are not data constants.
    if (ins.target && !ins.immediates.empty()) ins.immediates.clear();
    return ins;
}

const Decoder& default_decoder() {
    static const CapstoneDecoder dec;
    return dec;
}

Instruction decode_at(const BinaryImage& img, Addr addr, const Decoder& dec) {
    if (!img.is_executable(addr)) throw Error(ErrorCode::out_of_range, hex(addr) + " is not in an executable section");
    auto bytes = img.view(addr, 15);
    auto ins = dec.decode(bytes, addr);
    if (!ins) throw Error(ErrorCode::invalid_opcode, "invalid opcode at " + hex(addr));
    return *ins;
}

const Instruction* DecodeCache::at(Addr addr) {
    auto it = cache_.find(addr);
    if (it == cache_.end()) {
        std::optional<Instruction> ins;
        if (img_.is_executable(addr)) ins = dec_.decode(img_.view(addr, 15), addr);
        it = cache_.emplace(addr, std::move(ins)).first;
    }
    return it->second ? &*it->second : nullptr;
}

}  // namespace ehfetch
