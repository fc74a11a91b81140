#include "slicing.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

namespace ehfetch {

namespace {

// A write through a 1- or 2-byte destination merges with the old value.
bool is_partial_write(const Instruction& ins, int r) {
    if (ins.operands.empty()) return false;
    const Operand& d = ins.operands[0];
    return d.type == Operand::Type::reg && d.reg == r && d.size < 4;
}

RegSet effective_writes(const Instruction& ins) {
    RegSet w = ins.writes;
    if (ins.is_call()) w |= kCallClobbered;
    return w & ~bit(reg::rsp);
}

const std::vector<Addr>& preds_of(const InsnGraph& g, Addr a) {
    static const std::vector<Addr> empty;
    auto it = g.preds.find(a);
    return it == g.preds.end() ? empty : it->second;
}

std::vector<const Instruction*> sorted(std::set<Addr> addrs, const InsnGraph& g) {
    std::vector<const Instruction*> out;
    for (Addr a : addrs) out.push_back(g.insns.at(a));
    return out;
}

}  // namespace

SliceResult backward_slice(const InsnGraph& g, Addr from, RegSet seeds) {
    SliceResult res;
    std::set<Addr> in_slice;
    std::set<Addr> explored;
    RegSet closure = seeds;
    std::map<Addr, RegSet> seen;   // live sets already propagated into an address
    std::deque<std::pair<Addr, RegSet>> work;

    auto push_preds = [&](Addr a, RegSet live) {
        const auto& ps = preds_of(g, a);
        if (live && (a == g.entry || ps.empty())) res.escapes = true;
        for (Addr p : ps) work.emplace_back(p, live);
    };
    push_preds(from, seeds);

    while (!work.empty()) {
        auto [a, live] = work.front();
        work.pop_front();
        RegSet& s = seen[a];
        if ((live & ~s) == 0 && s != 0) continue;
        live |= s;
        s = live;
        auto it = g.insns.find(a);
        if (it == g.insns.end()) continue;
        const Instruction& ins = *it->second;
        explored.insert(a);
        RegSet w = effective_writes(ins) & live;
        if (w) {
            in_slice.insert(a);
            RegSet killed = 0;
            for (int r = 0; r < 16; ++r)
                if ((w & bit(r)) && !is_partial_write(ins, r)) killed |= bit(r);
            RegSet reads = ins.reads & ~bit(reg::rsp);
            live = (live & ~killed) | reads;
            closure |= reads | w;
        }
        if (!live) continue;
        push_preds(a, live);
    }

    // Alias closure: writes to or comparisons of slice registers on the explored paths.
    for (Addr a : explored) {
        const Instruction& ins = *g.insns.at(a);
        bool compares = ins.op == Op::cmp || ins.op == Op::test;
        RegSet touched = compares ? ins.reads : effective_writes(ins);
        if (touched & closure & ~bit(reg::rsp)) in_slice.insert(a);
    }
    res.instructions = sorted(std::move(in_slice), g);
    return res;
}

ReachingDefs reaching_definitions(const InsnGraph& g, Addr at, int r) {
    ReachingDefs res;
    std::set<Addr> defs;
    std::set<Addr> visited;
    std::deque<Addr> work;
    auto push_preds = [&](Addr a) {
        const auto& ps = preds_of(g, a);
        if (ps.empty() || a == g.entry) res.escapes = true;
        for (Addr p : ps) work.push_back(p);
    };
    push_preds(at);
    while (!work.empty()) {
        Addr a = work.front();
        work.pop_front();
        if (!visited.insert(a).second) continue;
        auto it = g.insns.find(a);
        if (it == g.insns.end()) {
            res.escapes = true;
            continue;
        }
        if (effective_writes(*it->second) & bit(r)) {
            defs.insert(a);
            continue;
        }
        push_preds(a);
    }
    res.defs = sorted(std::move(defs), g);
    return res;
}

}  // namespace ehfetch
