#include "jumptable.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <map>
#include <set>
#include <tuple>

namespace ehfetch {

namespace {

// Hash-consed symbolic values. Construction normalises, so two values are
// equal exactly when their ids are equal.
enum class K { init, cnst, low, and_, add, sext, partial, load, unknown };

struct Node {
    K k = K::unknown;
    int a = -1;
    int b = -1;
    std::int64_t imm = 0;
    std::uint64_t site = 0;
    std::uint8_t bits = 0;    // low/sext/partial width, load size in bits
    std::uint8_t scale = 0;   // load index scale

    auto key() const { return std::tuple(k, a, b, imm, site, bits, scale); }
};

std::uint64_t mask(unsigned bits) { return bits >= 64 ? ~0ull : ((1ull << bits) - 1); }

class Pool {
public:
    const Node& at(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    int init(int reg) { return intern({K::init, -1, -1, reg}); }
    int cnst(std::int64_t v) { return intern({K::cnst, -1, -1, v}); }
    int unknown(Addr site, int reg) { return intern({K::unknown, -1, -1, reg, site}); }

    int low(int e, unsigned bits) {
        if (bits >= 64) return e;
        const Node n = at(e);
        switch (n.k) {
        case K::cnst: return cnst(static_cast<std::int64_t>(static_cast<std::uint64_t>(n.imm) & mask(bits)));
        case K::low: return low(n.a, std::min<unsigned>(bits, n.bits));
        case K::and_:
            if (static_cast<std::uint64_t>(n.imm) <= mask(bits)) return e;
            break;
        case K::partial:
            if (bits <= n.bits) return low(n.b, bits);
            break;
        case K::load:
            if (n.bits <= bits) return e;
            break;
        default: break;
        }
        return intern({K::low, e, -1, 0, 0, static_cast<std::uint8_t>(bits)});
    }

    int and_(int e, std::uint64_t m) {
        const Node n = at(e);
        if (n.k == K::cnst) return cnst(static_cast<std::int64_t>(static_cast<std::uint64_t>(n.imm) & m));
        if (n.k == K::low && m <= mask(n.bits)) return and_(n.a, m);
        if (n.k == K::and_) return and_(n.a, static_cast<std::uint64_t>(n.imm) & m);
        return intern({K::and_, e, -1, static_cast<std::int64_t>(m)});
    }

    int add(int x, int y) {
        const Node& nx = at(x);
        const Node& ny = at(y);
        if (nx.k == K::cnst && ny.k == K::cnst) return cnst(nx.imm + ny.imm);
        if (x > y) std::swap(x, y);
        return intern({K::add, x, y});
    }

    int sext(int e, unsigned bits) {
        const Node n = at(e);
        if (n.k == K::cnst) {
            std::uint64_t v = static_cast<std::uint64_t>(n.imm) & mask(bits);
            std::uint64_t sign = 1ull << (bits - 1);
            return cnst(static_cast<std::int64_t>((v ^ sign) - sign));
        }
        return intern({K::sext, e, -1, 0, 0, static_cast<std::uint8_t>(bits)});
    }

    int partial(int old, int val, unsigned bits) {
        return intern({K::partial, old, val, 0, 0, static_cast<std::uint8_t>(bits)});
    }

    int load(int base, int index, int scale, std::int64_t disp, unsigned bits, Addr site) {
        return intern({K::load, base, index, disp, site, static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(scale)});
    }

private:
    int intern(Node n) {
        auto [it, inserted] = ids_.emplace(n.key(), static_cast<int>(nodes_.size()));
        if (inserted) nodes_.push_back(n);
        return it->second;
    }

    std::vector<Node> nodes_;
    std::map<decltype(Node{}.key()), int> ids_;
};

struct Guard {
    int value = -1;
    std::uint64_t imm = 0;
};

class PathEvaluator {
public:
    PathEvaluator() {
        for (int r = 0; r < 17; ++r) regs_[static_cast<std::size_t>(r)] = pool_.init(r);
    }

    Pool& pool() { return pool_; }
    int value(int r) const { return regs_[static_cast<std::size_t>(r)]; }
    std::optional<std::uint64_t> bound_of(int v) const {
        auto it = bounds_.find(v);
        if (it == bounds_.end()) return std::nullopt;
        return it->second;
    }

    /// Executes ins; `next` is the following address on the path, if any.
    void step(const Instruction& ins, std::optional<Addr> next) {
        const Addr site = ins.addr;
        const auto& ops = ins.operands;
        bool dst_reg = !ops.empty() && ops[0].type == Operand::Type::reg;
        bool keeps_flags = false;

        if (ins.kind == InsnKind::jump_conditional) {
            apply_guard(ins, next);
            return;
        }
        if (ins.zeroing_idiom && dst_reg) {
            write(ops[0], pool_.cnst(0), site);
        } else if ((ins.op == Op::mov) && dst_reg && ops.size() == 2) {
            write(ops[0], read(ops[1], site), site);
            keeps_flags = true;
        } else if (ins.op == Op::movzx && dst_reg && ops.size() == 2) {
            write(ops[0], read(ops[1], site), site);
            keeps_flags = true;
        } else if (ins.op == Op::movsx && dst_reg && ops.size() == 2) {
            write(ops[0], pool_.sext(read(ops[1], site), ops[1].size * 8u), site);
            keeps_flags = true;
        } else if (ins.op == Op::lea && dst_reg && ops.size() == 2) {
            write(ops[0], address(ops[1].mem, site), site);
            keeps_flags = true;
        } else if (ins.op == Op::and_ && dst_reg && ops.size() == 2 && ops[1].type == Operand::Type::imm) {
            std::uint64_t m = static_cast<std::uint64_t>(ops[1].imm) & mask(ops[0].size * 8u);
            write(ops[0], pool_.and_(read(ops[0], site), m), site);
        } else if (ins.op == Op::add && dst_reg && ops.size() == 2 && ops[1].type != Operand::Type::mem) {
            write(ops[0], pool_.add(read(ops[0], site), read(ops[1], site)), site);
        } else if (ins.op == Op::sub && dst_reg && ops.size() == 2 && ops[1].type == Operand::Type::imm) {
            write(ops[0], pool_.add(read(ops[0], site), pool_.cnst(-ops[1].imm)), site);
        } else if (ins.op == Op::cmp && ops.size() == 2 && dst_reg && ops[1].type == Operand::Type::imm) {
            guard_ = Guard{read(ops[0], site), static_cast<std::uint64_t>(ops[1].imm) & mask(ops[0].size * 8u)};
            return;
        } else if (ins.op == Op::nop || ins.op == Op::push) {
            keeps_flags = true;
        } else {
            clobber(ins, site);
        }
        if (!keeps_flags) guard_.reset();
    }

private:
    void clobber(const Instruction& ins, Addr site) {
        RegSet w = ins.writes | (ins.is_call() ? kCallClobbered : 0);
        for (int r = 0; r < 16; ++r)
            if ((w & bit(r)) && r != reg::rsp) regs_[static_cast<std::size_t>(r)] = pool_.unknown(site, r);
    }

    int read(const Operand& op, Addr site) {
        switch (op.type) {
        case Operand::Type::imm: return pool_.cnst(op.imm);
        case Operand::Type::reg: {
            if (op.reg < 0 || op.reg > 16) return pool_.unknown(site, 100);
            if (op.high8) return pool_.unknown(site, 100 + op.reg);
            return pool_.low(value(op.reg), op.size * 8u);
        }
        case Operand::Type::mem: {
            const MemOperand& m = op.mem;
            if (m.segment) return pool_.unknown(site, 200);
            int base = -1;
            std::int64_t disp = m.disp;
            if (m.absolute) {
                disp = static_cast<std::int64_t>(*m.absolute);
            } else if (m.base != reg::none) {
                base = value(m.base);
            }
            int index = m.index == reg::none ? -1 : value(m.index);
            return pool_.load(base, index, m.scale, disp, op.size * 8u, site);
        }
        }
        return pool_.unknown(site, 300);
    }

    int address(const MemOperand& m, Addr site) {
        if (m.absolute) return pool_.cnst(static_cast<std::int64_t>(*m.absolute));
        if (m.index != reg::none || m.segment || m.base == reg::none) return pool_.unknown(site, 400);
        return pool_.add(value(m.base), pool_.cnst(m.disp));
    }

    void write(const Operand& dst, int v, Addr site) {
        if (dst.reg < 0 || dst.reg > 16) return;
        auto& slot = regs_[static_cast<std::size_t>(dst.reg)];
        if (dst.high8) slot = pool_.unknown(site, dst.reg);
        else if (dst.size >= 8) slot = v;
        else if (dst.size == 4) slot = pool_.low(v, 32);
        else slot = pool_.partial(slot, v, dst.size * 8u);
    }

    void apply_guard(const Instruction& jcc, std::optional<Addr> next) {
        if (!guard_ || !next || !jcc.target) return;
        bool taken = *next == *jcc.target && *next != jcc.end();
        bool fall = *next == jcc.end() && *next != *jcc.target;
        std::optional<std::uint64_t> bound;
        if ((jcc.cond == Cond::a && fall) || (jcc.cond == Cond::be && taken)) bound = guard_->imm + 1;
        if ((jcc.cond == Cond::ae && fall) || (jcc.cond == Cond::b && taken)) bound = guard_->imm;
        if (!bound) return;
        auto [it, inserted] = bounds_.emplace(guard_->value, *bound);
        if (!inserted) it->second = std::min(it->second, *bound);
    }

    Pool pool_;
    std::array<int, 17> regs_{};
    std::optional<Guard> guard_;
    std::map<int, std::uint64_t> bounds_;
};

std::vector<Addr> single_path_to(const InsnGraph& g, Addr jump) {
    std::vector<Addr> path{jump};
    std::set<Addr> seen{jump};
    Addr cur = jump;
    while (true) {
        auto it = g.preds.find(cur);
        if (it == g.preds.end() || it->second.size() != 1) break;
        Addr p = it->second.front();
        if (!seen.insert(p).second) break;
        const Instruction* pi = g.insns.at(p);
        if (pi->kind == InsnKind::jump_conditional && pi->target && *pi->target == pi->end()) break;
        path.push_back(p);
        cur = p;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

JumpTableOutcome resolve_jump_table(const BinaryImage& img, const InsnGraph& g, const Instruction& jump) {
    JumpTableOutcome out;
    if (jump.kind != InsnKind::jump_indirect) {
        out.reason = "not an indirect jump";
        return out;
    }
    auto path = single_path_to(g, jump.addr);
    PathEvaluator ev;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        auto it = g.insns.find(path[i]);
        if (it == g.insns.end()) break;
        ev.step(*it->second, path[i + 1]);
    }
    Pool& pool = ev.pool();

    // Locate the table load feeding the jump.
    int load_id = -1;
    std::optional<int> rel_base;   // constant added to the loaded entry
    if (jump.operands.size() != 1) {
        out.reason = "unexpected operand shape";
        return out;
    }
    const Operand& target_op = jump.operands[0];
    if (target_op.type == Operand::Type::mem) {
        const MemOperand& m = target_op.mem;
        if (m.index == reg::none) {
            out.reason = "memory operand has no index";
            return out;
        }
        int base = m.base == reg::none ? -1 : ev.value(m.base);
        load_id = pool.load(base, ev.value(m.index), m.scale, m.disp, target_op.size * 8u, jump.addr);
    } else if (target_op.type == Operand::Type::reg && target_op.size == 8) {
        int v = ev.value(target_op.reg);
        const Node& n = pool.at(v);
        if (n.k == K::load) {
            load_id = v;
        } else if (n.k == K::add) {
            for (auto [x, y] : {std::pair{n.a, n.b}, std::pair{n.b, n.a}}) {
                const Node& nx = pool.at(x);
                const Node& ny = pool.at(y);
                if (nx.k == K::cnst && ny.k == K::sext && ny.bits == 32 && pool.at(ny.a).k == K::load &&
                    pool.at(ny.a).bits == 32) {
                    load_id = ny.a;
                    rel_base = x;
                }
            }
        }
    }
    if (load_id < 0) {
        out.reason = "no table load of shape [CONST + index*size] reaches the jump";
        return out;
    }
    const Node load = pool.at(load_id);
    if (load.b < 0) {
        out.reason = "table load has no index";
        return out;
    }
    Addr table = static_cast<Addr>(load.imm);
    if (load.a >= 0) {
        const Node& base = pool.at(load.a);
        if (base.k != K::cnst) {
            out.reason = "table base is not a constant";
            return out;
        }
        table += static_cast<Addr>(base.imm);
    }
    const unsigned entry_size = load.bits / 8u;
    const bool relative = rel_base.has_value();
    if (relative ? entry_size != 4 : (entry_size != 8 && entry_size != 4)) {
        out.reason = "unsupported entry size";
        return out;
    }
    if (load.scale != entry_size) {
        out.reason = "index scale does not match entry size";
        return out;
    }

    auto bound = ev.bound_of(load.b);
    if (!bound) {
        out.reason = "no compare-and-branch bound on the table index";
        return out;
    }
    if (const Node& idx = pool.at(load.b); idx.k == K::and_)
        bound = std::min<std::uint64_t>(*bound, static_cast<std::uint64_t>(idx.imm) + 1);
    if (*bound == 0 || *bound > kMaxJumpTableEntries) {
        out.reason = "table bound out of range";
        return out;
    }

    JumpTableResolution res;
    res.jump_addr = jump.addr;
    res.base = relative ? static_cast<Addr>(pool.at(*rel_base).imm) : table;
    res.entry_size = static_cast<std::uint8_t>(entry_size);
    res.index_register = target_op.type == Operand::Type::mem ? target_op.mem.index : reg::none;
    res.index_bound = *bound;
    res.entry_kind = relative ? TableEntryKind::base_relative_signed : TableEntryKind::absolute;
    const Section* sec = img.section_at(table);
    if (!sec) {
        out.reason = "table is not mapped";
        return out;
    }
    res.writable_table = sec->writable;
    try {
        auto bytes = img.read_bytes(table, *bound * entry_size);
        for (std::uint64_t i = 0; i < *bound; ++i) {
            const std::uint8_t* p = bytes.data() + i * entry_size;
            Addr t = 0;
            if (entry_size == 8) {
                std::uint64_t v;
                std::memcpy(&v, p, 8);
                t = v;
            } else {
                std::uint32_t v;
                std::memcpy(&v, p, 4);
                t = relative ? res.base + static_cast<Addr>(static_cast<std::int64_t>(static_cast<std::int32_t>(v)))
                             : static_cast<Addr>(v);
            }
            if (!img.is_executable(t)) {
                out.reason = "table entry " + std::to_string(i) + " points outside code";
                return out;
            }
            res.targets.push_back(t);
        }
    } catch (const Error&) {
        out.reason = "table extends past its section";
        return out;
    }
    if (res.writable_table) out.reason = "table lives in a writable section";
    if (res.index_register == reg::none) {
        // Register form: name the register that carried the index into the load.
        for (int r = 0; r < 16; ++r)
            if (ev.value(r) == load.b) res.index_register = r;
    }
    out.resolution = std::move(res);
    return out;
}

}  // namespace ehfetch
