#include "disassembler.hpp"

#include "callconv.hpp"
#include "jumptable.hpp"

#include <algorithm>
#include <functional>

namespace ehfetch {

namespace {

constexpr std::int64_t kSysExit = 60;
constexpr std::int64_t kSysExitGroup = 231;
constexpr std::int64_t kSysRtSigreturn = 15;

bool in_any(const std::vector<AddrRange>& rs, Addr a) {
    return std::any_of(rs.begin(), rs.end(), [a](const AddrRange& r) { return r.contains(a); });
}

}  // namespace

std::vector<AddrRange> plt_ranges(const BinaryImage& img) {
    std::vector<AddrRange> out;
    for (const auto& s : img.sections())
        if (s.allocated && s.executable && (s.name == ".plt" || s.name == ".plt.sec" || s.name == ".plt.got"))
            out.push_back(s.range());
    return out;
}

struct Disassembler::Traversal {
    InsnGraph graph;
    std::map<std::pair<Addr, Addr>, EdgeKind> edge_kinds;
    std::vector<InterJump> inter_jumps;
    std::vector<std::pair<Addr, Addr>> calls;
    std::map<Addr, JumpTableResolution> jump_tables;
    std::vector<Addr> unresolved;
    std::vector<Addr> suppressed;
    std::set<Addr> deferred;
    std::set<Addr> deps;
    bool has_ret = false;
    bool invalid_entry = false;
    Diagnostics diags;
    std::optional<std::string> first_error;   // speculative mode

    void error(const std::string& msg) {
        if (!first_error) first_error = msg;
    }
};

Disassembler::Disassembler(const BinaryImage& img, const NoReturnDb& db, DecodeCache& cache)
    : img_(img), db_(db), cache_(cache), plt_ranges_(plt_ranges(img)) {}

bool Disassembler::is_plt_address(Addr a) const { return in_any(plt_ranges_, a); }

std::optional<std::string> Disassembler::plt_name(Addr a) {
    if (!is_plt_address(a)) return std::nullopt;
    auto it = plt_names_.find(a);
    if (it != plt_names_.end()) return it->second;
    std::optional<std::string> name;
    Addr cur = a;
    for (int i = 0; i < 3; ++i) {
        const Instruction* ins = cache_.at(cur);
        if (!ins) break;
        if (ins->kind == InsnKind::jump_indirect) {
            if (ins->memory_operand && ins->memory_operand->rip_relative) {
                auto slot = img_.import_slots().find(*ins->memory_operand->absolute);
                if (slot != img_.import_slots().end()) name = slot->second;
            }
            break;
        }
        if (ins->ends_path() || ins->is_call()) break;
        cur = ins->end();
    }
    plt_names_[a] = name;
    return name;
}

void Disassembler::add_start(Addr a, Provenance p, std::optional<std::size_t> fde_index, std::vector<AddrRange> hints) {
    auto [it, inserted] = starts_.try_emplace(a);
    if (inserted) {
        it->second.provenance = p;
        it->second.fde_index = fde_index;
        invalid_.erase(a);
        dirty_.insert(a);
        mark_dependents(a);
    } else if (!it->second.fde_index && fde_index) {
        it->second.fde_index = fde_index;
    }
    for (const auto& h : hints) add_hint(a, h);
}

void Disassembler::add_hint(Addr start, AddrRange r) {
    auto it = starts_.find(start);
    if (it == starts_.end()) return;
    auto& hs = it->second.hints;
    if (std::find(hs.begin(), hs.end(), r) == hs.end()) {
        hs.push_back(r);
        std::sort(hs.begin(), hs.end());
        dirty_.insert(start);
    }
}

bool Disassembler::remove_start(Addr a) {
    if (!starts_.erase(a)) return false;
    cfgs_.erase(a);
    status_.erase(a);
    unknown_.erase(a);
    touched_.insert(a);
    changelog_.insert(a);
    diags_.erase(a);
    if (auto d = deps_.find(a); d != deps_.end()) {
        for (Addr x : d->second) rdeps_[x].erase(a);
        deps_.erase(d);
    }
    dirty_.erase(a);
    mark_dependents(a);
    return true;
}

void Disassembler::mark_dependents(Addr a) {
    auto it = rdeps_.find(a);
    if (it == rdeps_.end()) return;
    for (Addr f : it->second)
        if (starts_.count(f)) dirty_.insert(f);
}

ReturnStatus Disassembler::status(Addr start) const {
    auto it = status_.find(start);
    return it == status_.end() ? ReturnStatus::unknown : it->second;
}

ReturnStatus Disassembler::callee_status(Addr target, Addr self) const {
    if (!img_.is_executable(target)) return ReturnStatus::returns;
    if (invalid_.count(target)) return ReturnStatus::returns;
    if (target != self && !starts_.count(target)) return ReturnStatus::unknown;
    return status(target);
}

bool Disassembler::is_exit_syscall(const InsnGraph& g, Addr syscall) const {
    Addr cur = syscall;
    while (true) {
        auto p = g.preds.find(cur);
        if (p == g.preds.end() || p->second.size() != 1) return false;
        cur = p->second.front();
        const Instruction& ins = *g.insns.at(cur);
        if (ins.is_branch() || ins.is_call()) return false;   // stay within the block
        if (ins.writes & bit(reg::rax)) {
            if (ins.op == Op::mov && ins.operands.size() == 2 && ins.operands[1].type == Operand::Type::imm &&
                ins.operands[0].size >= 4) {
                std::int64_t n = ins.operands[1].imm;
                return n == kSysExit || n == kSysExitGroup || n == kSysRtSigreturn;
            }
            return false;
        }
    }
}

Disassembler::Traversal Disassembler::traverse(Addr start, bool speculative) {
    Traversal t;
    t.graph.entry = start;
    const std::vector<AddrRange>* hints = nullptr;
    if (auto si = starts_.find(start); si != starts_.end() && !si->second.hints.empty()) hints = &si->second.hints;

    std::vector<Addr> stack{start};
    std::vector<Addr> pending_indirect;
    std::vector<Addr> pending_error;
    std::set<Addr> handled_indirect;
    std::set<Addr> handled_error;

    auto edge = [&](Addr from, Addr to, EdgeKind k) {
        t.graph.add_edge(from, to);
        t.edge_kinds.emplace(std::pair{from, to}, k);
        stack.push_back(to);
    };
    auto jump_to = [&](const Instruction& ins, Addr target, EdgeKind k, bool conditional) {
        t.deps.insert(target);
        if (target != start && starts_.count(target) && !invalid_.count(target)) {
            t.inter_jumps.push_back({ins.addr, target, conditional, true});
            return;
        }
        if (!img_.is_executable(target)) {
            t.diags.push_back({Severity::warn, "disassembly", "jump at " + hex(ins.addr) + " leaves code: " + hex(target)});
            t.error("jump at " + hex(ins.addr) + " leaves code");
            return;
        }
        if (hints && !in_any(*hints, target)) t.inter_jumps.push_back({ins.addr, target, conditional, false});
        edge(ins.addr, target, k);
    };
    auto after_call = [&](const Instruction& ins, ReturnStatus st, std::optional<Addr> callee) {
        if (st == ReturnStatus::noreturn) {
            t.suppressed.push_back(ins.addr);
        } else if (st == ReturnStatus::unknown && !speculative) {
            t.deferred.insert(*callee);
        } else {
            edge(ins.addr, ins.end(), EdgeKind::fallthrough);
        }
    };

    while (true) {
        while (!stack.empty()) {
            Addr a = stack.back();
            stack.pop_back();
            if (t.graph.insns.count(a)) continue;

            // Overlap with instructions already decoded on another path of this function.
            auto next = t.graph.insns.lower_bound(a);
            if (next != t.graph.insns.begin()) {
                auto prev = std::prev(next);
                if (prev->second->end() > a) {
                    t.diags.push_back({Severity::warn, "disassembly",
                                       "path into the middle of instruction " + hex(prev->first) + " at " + hex(a)});
                    t.error("overlapping instructions at " + hex(a));
                    continue;
                }
            }
            const Instruction* ins = cache_.at(a);
            if (!ins) {
                t.diags.push_back({Severity::warn, "disassembly", "invalid opcode at " + hex(a)});
                t.error("invalid opcode at " + hex(a));
                if (a == start) t.invalid_entry = true;
                continue;
            }
            if (next != t.graph.insns.end() && next->first < ins->end()) {
                t.diags.push_back({Severity::warn, "disassembly",
                                   "instruction at " + hex(a) + " overlaps instruction " + hex(next->first)});
                t.error("overlapping instructions at " + hex(a));
                if (a == start) t.invalid_entry = true;
                continue;
            }
            t.graph.insns[a] = ins;

            switch (ins->kind) {
            case InsnKind::ret: t.has_ret = true; break;
            case InsnKind::halt_like: break;
            case InsnKind::jump_direct: jump_to(*ins, *ins->target, EdgeKind::jump, false); break;
            case InsnKind::jump_conditional:
                jump_to(*ins, *ins->target, EdgeKind::cond_taken, true);
                edge(a, ins->end(), EdgeKind::cond_fallthrough);
                break;
            case InsnKind::jump_indirect: pending_indirect.push_back(a); break;
            case InsnKind::call_direct: {
                Addr target = *ins->target;
                t.calls.emplace_back(a, target);
                t.deps.insert(target);
                if (!img_.is_executable(target)) {
                    t.diags.push_back({Severity::warn, "disassembly", "call at " + hex(a) + " leaves code: " + hex(target)});
                    t.error("call at " + hex(a) + " leaves code");
                    edge(a, ins->end(), EdgeKind::fallthrough);
                    break;
                }
                auto name = plt_name(target);
                if (name && db_.is_conditional(*name)) {
                    pending_error.push_back(a);
                } else if (name) {
                    after_call(*ins, db_.is_noreturn(*name) ? ReturnStatus::noreturn : ReturnStatus::returns, target);
                } else {
                    ReturnStatus st = callee_status(target, start);
                    if (st == ReturnStatus::unknown && speculative) st = ReturnStatus::returns;
                    after_call(*ins, st, target);
                }
                break;
            }
            case InsnKind::call_indirect: {
                // A call through a GOT slot names its callee even in stripped binaries.
                std::optional<std::string> name;
                if (ins->memory_operand && ins->memory_operand->rip_relative) {
                    auto slot = img_.import_slots().find(*ins->memory_operand->absolute);
                    if (slot != img_.import_slots().end()) name = slot->second;
                }
                if (name && db_.is_conditional(*name)) pending_error.push_back(a);
                else if (name && db_.is_noreturn(*name)) after_call(*ins, ReturnStatus::noreturn, std::nullopt);
                else edge(a, ins->end(), EdgeKind::fallthrough);
                break;
            }
            case InsnKind::syscall:
                if (!is_exit_syscall(t.graph, a)) edge(a, ins->end(), EdgeKind::fallthrough);
                break;
            default: edge(a, ins->end(), EdgeKind::fallthrough); break;
            }
        }

        bool progressed = false;
        for (Addr site : pending_error) {
            if (!handled_error.insert(site).second) continue;
            if (check_error_arg(t.graph, site) == ReturnStatus::returns) {
                edge(site, t.graph.insns.at(site)->end(), EdgeKind::fallthrough);
                progressed = true;
            } else {
                t.suppressed.push_back(site);
            }
        }
        for (Addr site : pending_indirect) {
            if (!handled_indirect.insert(site).second) continue;
            const Instruction& jmp = *t.graph.insns.at(site);
            auto outcome = resolve_jump_table(img_, t.graph, jmp);
            if (outcome.resolution) {
                if (outcome.resolution->writable_table)
                    t.diags.push_back({Severity::info, "jumptable",
                                       "table for " + hex(site) + " at " + hex(outcome.resolution->base) +
                                           " is in a writable section"});
                std::set<Addr> uniq(outcome.resolution->targets.begin(), outcome.resolution->targets.end());
                for (Addr target : uniq) {
                    t.graph.add_edge(site, target);
                    t.edge_kinds.emplace(std::pair{site, target}, EdgeKind::jumptable_entry);
                    stack.push_back(target);
                }
                t.jump_tables.emplace(site, std::move(*outcome.resolution));
                progressed = true;
            } else {
                t.unresolved.push_back(site);
                t.diags.push_back({Severity::info, "jumptable",
                                   "indirect jump at " + hex(site) + " left unresolved: " + outcome.reason});
            }
        }
        if (!progressed && stack.empty()) break;
    }
    std::sort(t.inter_jumps.begin(), t.inter_jumps.end());
    std::sort(t.calls.begin(), t.calls.end());
    std::sort(t.unresolved.begin(), t.unresolved.end());
    std::sort(t.suppressed.begin(), t.suppressed.end());
    return t;
}

FunctionCfg Disassembler::to_cfg(Addr start, const Traversal& t) const {
    FunctionCfg cfg;
    cfg.start = start;
    if (auto si = starts_.find(start); si != starts_.end()) {
        cfg.provenance = si->second.provenance;
        cfg.fde_index = si->second.fde_index;
        cfg.body_hints = si->second.hints;
    }
    cfg.inter_jumps = t.inter_jumps;
    cfg.calls = t.calls;
    cfg.jump_tables = t.jump_tables;
    cfg.unresolved_jumps = t.unresolved;
    cfg.suppressed_fallthroughs = t.suppressed;
    cfg.deferred_callees = t.deferred;
    cfg.has_ret = t.has_ret;

    const InsnGraph& g = t.graph;
    auto is_transfer = [](const Instruction& i) {
        return i.is_branch() || i.is_call() || i.kind == InsnKind::ret || i.kind == InsnKind::halt_like ||
               i.kind == InsnKind::syscall;
    };
    std::set<Addr> leaders{start};
    for (const auto& [a, ins] : g.insns) {
        auto p = g.preds.find(a);
        if (p == g.preds.end() || p->second.size() != 1) {
            leaders.insert(a);
        } else {
            const Instruction& pi = *g.insns.at(p->second.front());
            if (pi.end() != a || is_transfer(pi)) leaders.insert(a);
        }
        if (is_transfer(*ins))
            if (auto s = g.succs.find(a); s != g.succs.end())
                for (Addr x : s->second) leaders.insert(x);
    }
    for (Addr l : leaders) {
        if (!g.insns.count(l)) continue;
        BasicBlock b;
        b.start = l;
        Addr cur = l;
        while (true) {
            const Instruction& ins = *g.insns.at(cur);
            b.instructions.push_back(ins);
            b.end = ins.end();
            if (is_transfer(ins)) break;
            Addr nx = ins.end();
            if (!g.insns.count(nx) || leaders.count(nx)) break;
            auto s = g.succs.find(cur);
            if (s == g.succs.end() || s->second.size() != 1 || s->second.front() != nx) break;
            cur = nx;
        }
        if (auto s = g.succs.find(cur); s != g.succs.end()) {
            for (Addr x : s->second) {
                auto k = t.edge_kinds.find({cur, x});
                b.successors.emplace_back(x, k == t.edge_kinds.end() ? EdgeKind::fallthrough : k->second);
            }
            std::sort(b.successors.begin(), b.successors.end(),
                      [](const auto& x, const auto& y) { return x.first < y.first; });
        }
        cfg.blocks.emplace(l, std::move(b));
    }
    return cfg;
}

void Disassembler::store(Addr start, Traversal&& t) {
    if (auto d = deps_.find(start); d != deps_.end())
        for (Addr x : d->second) rdeps_[x].erase(start);
    for (Addr x : t.deps) rdeps_[x].insert(start);
    deps_[start] = t.deps;
    FunctionCfg cfg = to_cfg(start, t);
    if (is_plt_address(start)) {
        cfg.plt_stub = true;
        cfg.import_name = plt_name(start);
    }
    // More code (a merged part, a newly resolved callee) can only add ways to return.
    if (status(start) == ReturnStatus::noreturn && !cfg.plt_stub && (cfg.has_ret || !cfg.unresolved_jumps.empty())) {
        status_[start] = ReturnStatus::returns;
        mark_dependents(start);
    }
    if (status(start) == ReturnStatus::unknown) unknown_.insert(start);
    diags_[start] = std::move(t.diags);
    cfgs_[start] = std::move(cfg);
    touched_.insert(start);
    changelog_.insert(start);
}

ReturnStatus Disassembler::derive_status(const FunctionCfg& cfg) const {
    if (cfg.plt_stub) {
        bool nr = cfg.import_name && db_.is_noreturn(*cfg.import_name);
        return nr ? ReturnStatus::noreturn : ReturnStatus::returns;
    }
    if (cfg.has_ret || !cfg.unresolved_jumps.empty()) return ReturnStatus::returns;
    bool any_unknown = !cfg.deferred_callees.empty();
    for (const auto& j : cfg.inter_jumps) {
        if (!j.to_function_start) continue;
        ReturnStatus ts = status(j.target);
        if (ts == ReturnStatus::returns) return ReturnStatus::returns;
        if (ts == ReturnStatus::unknown) any_unknown = true;
    }
    return any_unknown ? ReturnStatus::unknown : ReturnStatus::noreturn;
}

void Disassembler::statuses_changed(const std::set<Addr>& changed) {
    for (Addr c : changed) {
        auto r = rdeps_.find(c);
        if (r == rdeps_.end()) continue;
        for (Addr f : r->second) {
            auto it = cfgs_.find(f);
            if (it != cfgs_.end() && it->second.deferred_callees.count(c)) dirty_.insert(f);
        }
    }
}

bool Disassembler::update_statuses() {
    std::set<Addr> changed;
    std::vector<Addr> work(unknown_.begin(), unknown_.end());
    while (!work.empty()) {
        Addr s = work.back();
        work.pop_back();
        if (!unknown_.count(s)) continue;
        auto it = cfgs_.find(s);
        if (it == cfgs_.end()) {
            unknown_.erase(s);
            continue;
        }
        ReturnStatus st = derive_status(it->second);
        if (st == ReturnStatus::unknown) continue;
        status_[s] = st;
        unknown_.erase(s);
        changed.insert(s);
        // Functions jumping here may now be decidable.
        if (auto r = rdeps_.find(s); r != rdeps_.end())
            for (Addr f : r->second)
                if (unknown_.count(f)) work.push_back(f);
    }
    statuses_changed(changed);
    return !changed.empty();
}

bool Disassembler::break_stall() {
    // Dependency graph among functions whose status is still unknown.
    std::vector<Addr> nodes;
    std::map<Addr, std::vector<Addr>> adj;
    for (Addr s : unknown_) {
        auto cit = cfgs_.find(s);
        if (cit == cfgs_.end()) continue;
        const FunctionCfg& cfg = cit->second;
        nodes.push_back(s);
        auto& out = adj[s];
        for (Addr c : cfg.deferred_callees)
            if (cfgs_.count(c) && status(c) == ReturnStatus::unknown) out.push_back(c);
        for (const auto& j : cfg.inter_jumps)
            if (j.to_function_start && cfgs_.count(j.target) && status(j.target) == ReturnStatus::unknown)
                out.push_back(j.target);
    }
    if (nodes.empty()) return false;

    // Tarjan's SCC.
    std::map<Addr, int> index, low;
    std::map<Addr, int> comp;
    std::set<Addr> on_stack;
    std::vector<Addr> stk;
    int counter = 0, ncomp = 0;
    std::function<void(Addr)> strong = [&](Addr v) {
        index[v] = low[v] = counter++;
        stk.push_back(v);
        on_stack.insert(v);
        for (Addr w : adj[v]) {
            if (!index.count(w)) {
                strong(w);
                low[v] = std::min(low[v], low[w]);
            } else if (on_stack.count(w)) {
                low[v] = std::min(low[v], index[w]);
            }
        }
        if (low[v] == index[v]) {
            while (true) {
                Addr w = stk.back();
                stk.pop_back();
                on_stack.erase(w);
                comp[w] = ncomp;
                if (w == v) break;
            }
            ++ncomp;
        }
    };
    for (Addr v : nodes)
        if (!index.count(v)) strong(v);

    std::vector<bool> bottom(static_cast<std::size_t>(ncomp), true);
    for (Addr v : nodes)
        for (Addr w : adj[v])
            if (comp[w] != comp[v]) bottom[static_cast<std::size_t>(comp[v])] = false;
    std::set<Addr> resolved;
    for (Addr v : nodes) {
        if (!bottom[static_cast<std::size_t>(comp[v])]) continue;
        status_[v] = ReturnStatus::noreturn;
        unknown_.erase(v);
        resolved.insert(v);
    }
    engine_diags_.push_back({Severity::info, "noreturn",
                             std::to_string(resolved.size()) + " function(s) in call cycles without a reachable return "
                                                               "treated as non-returning"});
    statuses_changed(resolved);
    return true;
}

void Disassembler::run() {
    while (true) {
        while (!dirty_.empty()) {
            Addr s = *dirty_.begin();
            dirty_.erase(dirty_.begin());
            if (!starts_.count(s)) continue;
            Traversal t = traverse(s, false);
            if (t.invalid_entry) {
                engine_diags_.push_back({Severity::warn, "disassembly",
                                         "dropping start " + hex(s) + ": entry does not decode"});
                remove_start(s);
                invalid_.insert(s);
                continue;
            }
            std::vector<Addr> targets;
            for (const auto& [site, target] : t.calls) targets.push_back(target);
            store(s, std::move(t));
            for (Addr target : targets)
                if (img_.is_executable(target) && !starts_.count(target) && !invalid_.count(target))
                    add_start(target, Provenance::call_target);
        }
        if (update_statuses()) continue;
        if (!dirty_.empty()) continue;
        if (!break_stall()) break;
    }
    rebuild_function_set();
}

void Disassembler::rebuild_function_set() {
    // Only functions traversed or removed since the last call are re-copied.
    for (Addr s : touched_) {
        if (auto old = fs_.functions.find(s); old != fs_.functions.end()) {
            for (const auto& [_, b] : old->second.blocks)
                for (const auto& ins : b.instructions) drop_owner(ins.addr, s);
            fs_.call_graph_edges.erase(fs_.call_graph_edges.lower_bound({s, 0}),
                                       fs_.call_graph_edges.lower_bound({s + 1, 0}));
            fs_.functions.erase(old);
        }
        auto cit = cfgs_.find(s);
        if (cit == cfgs_.end()) continue;
        FunctionCfg& copy = fs_.functions.emplace(s, cit->second).first->second;
        for (const auto& [_, b] : copy.blocks)
            for (const auto& ins : b.instructions) add_owner(ins.addr, ins.length, s);
        for (const auto& [site, target] : copy.calls) fs_.call_graph_edges.emplace(s, target);
    }
    touched_.clear();
    for (auto& [s, f] : fs_.functions) f.status = status(s);
    fs_.classified_sites = classified_;
    fs_.diagnostics = engine_diags_;
    for (const auto& [s, d] : diags_) fs_.diagnostics.insert(fs_.diagnostics.end(), d.begin(), d.end());
}

void Disassembler::add_owner(Addr a, std::uint8_t len, Addr owner) {
    auto& owners = owners_[a];
    owners.insert(owner);
    fs_.instruction_map[a] = InstrInfo{len, *owners.begin(), owners.size() > 1};
}

void Disassembler::drop_owner(Addr a, Addr owner) {
    auto it = owners_.find(a);
    if (it == owners_.end()) return;
    it->second.erase(owner);
    if (it->second.empty()) {
        owners_.erase(it);
        fs_.instruction_map.erase(a);
        return;
    }
    auto& info = fs_.instruction_map[a];
    info.owner = *it->second.begin();
    info.shared = it->second.size() > 1;
}

std::set<Addr> Disassembler::take_changed() {
    std::set<Addr> out;
    out.swap(changelog_);
    return out;
}

Speculation Disassembler::speculate(Addr candidate) {
    Speculation out;
    auto reject = [&](std::string why) {
        out.accepted = false;
        out.reason = std::move(why);
        out.new_starts.clear();
        return out;
    };
    std::vector<Addr> queue{candidate};
    std::set<Addr> queued{candidate};
    std::map<Addr, std::uint8_t> spec_insns;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        Addr s = queue[qi];
        Traversal t = traverse(s, true);
        if (t.first_error) return reject(*t.first_error);
        for (const auto& [a, ins] : t.graph.insns) {
            if (in_existing_instruction(fs_, a)) return reject("runs into the middle of an instruction at " + hex(a));
            auto next = fs_.instruction_map.upper_bound(a);
            if (next != fs_.instruction_map.end() && next->first < ins->end())
                return reject("instruction at " + hex(a) + " overlaps decoded code");
            if (fs_.instruction_map.count(a) && !fs_.is_start(a))
                return reject("flows into the middle of a known function at " + hex(a));
            spec_insns.emplace(a, ins->length);
        }
        for (const auto& [site, target] : t.calls) {
            if (fs_.is_start(target) || queued.count(target)) continue;
            if (fs_.covering_instruction(target))
                return reject("call at " + hex(site) + " targets the middle of a known function");
            queue.push_back(target);
            queued.insert(target);
        }
        for (const auto& j : t.inter_jumps)
            if (!j.to_function_start && fs_.covering_instruction(j.target))
                return reject("jump at " + hex(j.site) + " targets the middle of a known function");
        if (auto v = check_calling_convention(t.graph)) return reject("calling convention: " + v->describe());
    }
    // Speculative functions must not overlap each other either.
    Addr prev_end = 0;
    for (const auto& [a, len] : spec_insns) {
        if (a < prev_end) return reject("speculative paths overlap at " + hex(a));
        prev_end = std::max<Addr>(prev_end, a + len);
    }
    out.accepted = true;
    out.new_starts = queue;
    return out;
}

FunctionCfg Disassembler::traverse_detached(Addr start) {
    Traversal t = traverse(start, true);
    return to_cfg(start, t);
}

FunctionSet recursive_disassemble(const BinaryImage& img, const std::set<Addr>& seeds, const NoReturnDb& db) {
    DecodeCache cache(img);
    Disassembler d(img, db, cache);
    for (Addr s : seeds) {
        if (!img.is_executable(s)) continue;
        d.add_start(s, Provenance::fde);
    }
    d.run();
    FunctionSet fs = d.function_set();
    for (Addr s : seeds)
        if (!img.is_executable(s))
            fs.diagnostics.push_back({Severity::warn, "disassembly", "seed " + hex(s) + " is not in executable code"});
    return fs;
}

}  // namespace ehfetch
