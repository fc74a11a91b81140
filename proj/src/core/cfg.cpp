#include "cfg.hpp"

#include <algorithm>

namespace ehfetch {

std::string_view to_string(Provenance p) {
    switch (p) {
    case Provenance::fde: return "fde";
    case Provenance::call_target: return "call_target";
    case Provenance::pointer: return "pointer";
    case Provenance::tail_call: return "tail_call";
    }
    return "fde";
}

std::optional<Provenance> provenance_from_string(std::string_view s) {
    if (s == "fde") return Provenance::fde;
    if (s == "call_target") return Provenance::call_target;
    if (s == "pointer") return Provenance::pointer;
    if (s == "tail_call") return Provenance::tail_call;
    return std::nullopt;
}

bool FunctionCfg::contains_instruction(Addr a) const {
    auto it = blocks.upper_bound(a);
    if (it == blocks.begin()) return false;
    const BasicBlock& b = std::prev(it)->second;
    if (a >= b.end) return false;
    return std::any_of(b.instructions.begin(), b.instructions.end(), [a](const Instruction& i) { return i.addr == a; });
}

std::size_t FunctionCfg::instruction_count() const {
    std::size_t n = 0;
    for (const auto& [_, b] : blocks) n += b.instructions.size();
    return n;
}

std::optional<std::pair<Addr, InstrInfo>> FunctionSet::covering_instruction(Addr a) const {
    auto it = instruction_map.upper_bound(a);
    // Instructions are at most 15 bytes long, so only a few predecessors can cover a.
    for (int steps = 0; steps < 16 && it != instruction_map.begin(); ++steps) {
        --it;
        if (it->first + it->second.length > a) return *it;
        if (a - it->first >= 15) break;
    }
    return std::nullopt;
}

bool in_existing_instruction(const FunctionSet& fs, Addr addr) {
    auto cov = fs.covering_instruction(addr);
    return cov && cov->first != addr;
}

void InsnGraph::add_edge(Addr from, Addr to) {
    auto& s = succs[from];
    if (std::find(s.begin(), s.end(), to) == s.end()) s.push_back(to);
    auto& p = preds[to];
    if (std::find(p.begin(), p.end(), from) == p.end()) p.push_back(from);
}

InsnGraph build_graph(const FunctionCfg& cfg) {
    InsnGraph g;
    g.entry = cfg.start;
    for (const auto& [_, b] : cfg.blocks) {
        for (std::size_t i = 0; i < b.instructions.size(); ++i) {
            const Instruction& ins = b.instructions[i];
            g.insns[ins.addr] = &ins;
            if (i + 1 < b.instructions.size()) g.add_edge(ins.addr, b.instructions[i + 1].addr);
        }
        if (!b.instructions.empty())
            for (const auto& [to, kind] : b.successors) g.add_edge(b.instructions.back().addr, to);
    }
    return g;
}

}  // namespace ehfetch
