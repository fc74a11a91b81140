#include "tailcall.hpp"

#include "callconv.hpp"
#include "pointer_scan.hpp"

#include <algorithm>

namespace ehfetch {

std::string_view to_string(RefKind k) {
    switch (k) {
    case RefKind::call: return "call";
    case RefKind::jump: return "jump";
    case RefKind::code_constant: return "code_constant";
    case RefKind::data_word: return "data_word";
    case RefKind::jump_table_entry: return "jump_table_entry";
    }
    return "?";
}

std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::tail_call: return "tail_call";
    case Verdict::merged: return "merged";
    case Verdict::skipped: return "skipped";
    }
    return "?";
}

namespace {

/// Reference index kept current as functions change: each function's
/// contributions are tracked so they can be withdrawn when it is re-traversed.
class RefBook {
public:
    RefBook(const BinaryImage& img, const FunctionSet& fs) : img_(img) {
        for (const auto& w : scan_words(img, fs)) idx_[w.value].insert({RefKind::data_word, w.where, 0});
        for (const auto& [s, f] : fs.functions) add(f);
    }

    void update(const FunctionSet& fs, const std::set<Addr>& changed) {
        for (Addr s : changed) {
            withdraw(s);
            if (auto it = fs.functions.find(s); it != fs.functions.end()) add(it->second);
        }
    }

    const ReferenceIndex& index() const { return idx_; }
    ReferenceIndex take() { return std::move(idx_); }

private:
    void put(Addr owner, Addr target, Reference r) {
        if (idx_[target].insert(r).second) contrib_[owner].emplace_back(target, r);
    }
    void add(const FunctionCfg& f) {
        const Addr s = f.start;
        for (const auto& [site, target] : f.calls) put(s, target, {RefKind::call, site, s});
        for (const auto& j : f.inter_jumps) put(s, j.target, {RefKind::jump, j.site, s});
        for (const auto& [site, jt] : f.jump_tables)
            for (Addr t : jt.targets) put(s, t, {RefKind::jump_table_entry, site, s});
        for (const auto& [site, v] : function_constants(img_, f)) put(s, v, {RefKind::code_constant, site, s});
    }
    void withdraw(Addr owner) {
        auto it = contrib_.find(owner);
        if (it == contrib_.end()) return;
        for (const auto& [target, r] : it->second) {
            auto t = idx_.find(target);
            if (t == idx_.end()) continue;
            t->second.erase(r);
            if (t->second.empty()) idx_.erase(t);
        }
        contrib_.erase(it);
    }

    const BinaryImage& img_;
    ReferenceIndex idx_;
    std::map<Addr, std::vector<std::pair<Addr, Reference>>> contrib_;
};

}  // namespace

ReferenceIndex reference_index(const BinaryImage& img, const FunctionSet& fs) {
    return RefBook(img, fs).take();
}

const StackHeightTable* FrameInfo::table_for(Addr addr) const {
    const StackHeightTable* best = nullptr;
    for (const auto& t : heights)
        if (addr >= t.function_start && addr - t.function_start < t.range &&
            (!best || t.function_start > best->function_start))
            best = &t;
    return best;
}

FrameInfo build_frame_info(const EhFrame& eh) {
    FrameInfo fi;
    fi.fdes = eh.fdes;
    fi.heights.reserve(eh.fdes.size());
    for (const auto& f : eh.fdes) fi.heights.push_back(stack_heights(eh.cie_of(f), f));
    return fi;
}

namespace {

std::vector<Reference> refs_of(const ReferenceIndex& idx, Addr t) {
    auto it = idx.find(t);
    if (it == idx.end()) return {};
    std::vector<Reference> out;
    for (const auto& r : it->second)
        if (r.kind != RefKind::jump_table_entry) out.push_back(r);
    return out;
}

}  // namespace

std::vector<MergeDecision> detect_and_merge(const BinaryImage& img, Disassembler& dis, const FrameInfo& frames) {
    std::vector<MergeDecision> decisions;
    auto& classified = dis.classified_sites();
    dis.take_changed();
    RefBook book(img, dis.function_set());
    const std::vector<AddrRange> plts = plt_ranges(img);

    auto meets_cc = [&](Addr t) {
        const FunctionSet& fs = dis.function_set();
        if (auto it = fs.functions.find(t); it != fs.functions.end())
            return meets_calling_convention(build_graph(it->second));
        return meets_calling_convention(build_graph(dis.traverse_detached(t)));
    };

    Addr cursor = 0;
    bool first = true;
    while (true) {
        // Next function at or after the cursor; starts may have changed.
        const FunctionSet& fs = dis.function_set();
        auto fit = first ? fs.functions.begin() : fs.functions.lower_bound(cursor);
        if (fit == fs.functions.end()) break;
        first = false;
        const Addr f = fit->first;
        std::vector<InterJump> jumps = fit->second.inter_jumps;
        std::sort(jumps.begin(), jumps.end(), [](const auto& a, const auto& b) {
            return std::tie(a.site, a.target) < std::tie(b.site, b.target);
        });

        bool changed = false;
        for (const auto& j : jumps) {
            if (!classified.insert({j.site, j.target}).second) continue;
            MergeDecision d;
            d.site = {j.site, f, j.target, j.conditional, std::nullopt};
            d.target_refs = refs_of(book.index(), j.target);

            const StackHeightTable* table = frames.table_for(j.site);
            if (!table) {
                d.reason = "no FDE covers the jump";
                decisions.push_back(std::move(d));
                continue;
            }
            d.site.stack_height = height_at(*table, j.site);
            if (!d.site.stack_height) {
                d.reason = "incomplete CFI";
                if (!table->incompleteness_reason.empty()) d.reason += ": " + table->incompleteness_reason;
                decisions.push_back(std::move(d));
                continue;
            }
            const bool is_start = dis.has_start(j.target);
            const bool other_refs = std::any_of(d.target_refs.begin(), d.target_refs.end(), [&](const Reference& r) {
                return !(r.kind == RefKind::jump && r.owner == f);
            });
            if (*d.site.stack_height == 0 && other_refs && meets_cc(j.target)) {
                d.verdict = Verdict::tail_call;
                d.reason = "height 0, referenced elsewhere, meets calling convention";
                if (!is_start && img.is_executable(j.target)) {
                    dis.add_start(j.target, Provenance::tail_call);
                    dis.run();
                    changed = true;
                }
                decisions.push_back(std::move(d));
                if (changed) break;
                continue;
            }
            const bool plt_target = std::any_of(plts.begin(), plts.end(), [&](const AddrRange& r) {
                return r.contains(j.target);
            });
            if (is_start && !plt_target && d.target_refs.size() == 1 && d.target_refs.front().kind == RefKind::jump &&
                d.target_refs.front().site == j.site) {
                d.verdict = Verdict::merged;
                d.reason = "only reference is this jump";
                std::vector<AddrRange> hints = dis.function_set().functions.at(j.target).body_hints;
                dis.remove_start(j.target);
                for (const auto& h : hints) dis.add_hint(f, h);
                dis.run();
                decisions.push_back(std::move(d));
                changed = true;
                break;
            }
            if (*d.site.stack_height != 0)
                d.reason = "stack height " + std::to_string(*d.site.stack_height) + " at jump";
            else if (!other_refs)
                d.reason = "target has no references besides jumps in this function";
            else
                d.reason = "target breaks the calling convention";
            if (plt_target) d.reason += "; target is a PLT stub";
            else if (!is_start) d.reason += "; target is not a function start";
            else if (d.target_refs.size() != 1) d.reason += "; target has other references";
            decisions.push_back(std::move(d));
        }
        if (changed) {
            book.update(dis.function_set(), dis.take_changed());
            cursor = f;   // re-check the same function, its jump set has changed
        } else {
            cursor = f + 1;
        }
    }
    return decisions;
}

std::vector<RejectedStart> reject_invalid_fde_starts(Disassembler& dis, DecodeCache& cache) {
    std::vector<RejectedStart> out;
    for (const auto& [s, f] : dis.function_set().functions) {
        if (f.provenance != Provenance::fde || f.plt_stub) continue;
        if (!cache.at(s)) {
            out.push_back({s, "start does not decode"});
            continue;
        }
        if (auto v = check_entry_prefix(build_graph(f))) out.push_back({s, "calling convention: " + v->describe()});
    }
    for (const auto& r : out) dis.remove_start(r.start);
    if (!out.empty()) dis.run();
    return out;
}

}  // namespace ehfetch
