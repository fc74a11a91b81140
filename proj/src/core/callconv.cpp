#include "callconv.hpp"

#include <deque>
#include <map>

namespace ehfetch {

namespace {

constexpr RegSet kAll = (1u << 17) - 1;
constexpr RegSet kEntryInit = kArgumentRegs | bit(reg::rsp) | bit(reg::rbp) | bit(reg::rip);

bool is_stack_slot(const MemOperand& m) {
    return (m.base == reg::rsp || m.base == reg::rbp) && m.index == reg::none && !m.segment;
}

RegSet defs_of(const Instruction& ins) {
    RegSet w = ins.writes;
    if (ins.is_call()) w |= kCallClobbered;
    return w;
}

}  // namespace

std::string CallConvViolation::describe() const {
    return reg_name(reg) + " read before initialisation at " + hex(addr);
}

RegSet convention_uses(const Instruction& ins) {
    if (ins.kind == InsnKind::push) return ins.reads & (bit(reg::rsp) | bit(reg::rbp));
    if (ins.op == Op::mov && ins.operands.size() == 2 && ins.operands[0].type == Operand::Type::mem &&
        ins.operands[1].type == Operand::Type::reg && is_stack_slot(ins.operands[0].mem))
        return ins.reads & ~bit(ins.operands[1].reg);

    RegSet uses = ins.reads;
    // `test al, al` / `movzx eax, al` style reads of exactly al.
    bool only_al = false;
    for (const auto& op : ins.operands) {
        if (op.type == Operand::Type::reg && op.reg == reg::rax) {
            if (op.size == 1 && !op.high8) only_al = true;
            else return uses;
        }
        if (op.type == Operand::Type::mem && (op.mem.base == reg::rax || op.mem.index == reg::rax)) return uses;
    }
    if (only_al && !ins.is_call() && ins.kind != InsnKind::syscall) uses &= ~bit(reg::rax);
    return uses;
}

std::optional<CallConvViolation> check_calling_convention(const InsnGraph& g) {
    if (!g.insns.count(g.entry)) return std::nullopt;
    // Must-initialised sets on entry to each instruction; absent means not yet reached (top).
    std::map<Addr, RegSet> in;
    in[g.entry] = kEntryInit;
    std::deque<Addr> work{g.entry};
    while (!work.empty()) {
        Addr a = work.front();
        work.pop_front();
        const Instruction& ins = *g.insns.at(a);
        RegSet out = in[a] | defs_of(ins);
        auto sit = g.succs.find(a);
        if (sit == g.succs.end()) continue;
        for (Addr s : sit->second) {
            if (!g.insns.count(s)) continue;
            RegSet next = s == g.entry ? (out & kEntryInit) : out;
            auto it = in.find(s);
            if (it == in.end()) {
                in[s] = next;
                work.push_back(s);
            } else if ((it->second & next) != it->second) {
                it->second &= next;
                work.push_back(s);
            }
        }
    }
    for (const auto& [a, init] : in) {
        RegSet bad = convention_uses(*g.insns.at(a)) & ~init & kAll;
        if (bad) {
            for (int r = 0; r < 17; ++r)
                if (bad & bit(r)) return CallConvViolation{a, r};
        }
    }
    return std::nullopt;
}

std::optional<CallConvViolation> check_entry_prefix(const InsnGraph& g) {
    RegSet init = kEntryInit;
    Addr a = g.entry;
    for (std::size_t n = 0; n < g.insns.size(); ++n) {
        auto it = g.insns.find(a);
        if (it == g.insns.end()) break;
        const Instruction& ins = *it->second;
        if (RegSet bad = convention_uses(ins) & ~init & kAll) {
            for (int r = 0; r < 17; ++r)
                if (bad & bit(r)) return CallConvViolation{a, r};
        }
        init |= defs_of(ins);
        auto sit = g.succs.find(a);
        if (ins.is_call() || ins.is_branch() || ins.kind == InsnKind::ret || ins.kind == InsnKind::syscall ||
            sit == g.succs.end() || sit->second.size() != 1)
            break;
        a = sit->second.front();
    }
    return std::nullopt;
}

}  // namespace ehfetch
