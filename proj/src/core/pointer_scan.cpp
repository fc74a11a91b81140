#include "pointer_scan.hpp"

#include <algorithm>
#include <cstring>
#include <map>

namespace ehfetch {

std::string_view to_string(CandidateOrigin o) {
    switch (o) {
    case CandidateOrigin::data_scan: return "data_scan";
    case CandidateOrigin::code_gap_scan: return "code_gap_scan";
    case CandidateOrigin::code_constant: return "code_constant";
    case CandidateOrigin::jump_table_entry: return "jump_table_entry";
    }
    return "?";
}

namespace {

bool scanned_data_section(const Section& s) {
    // Unwind tables hold encoded (mostly pc-relative) values, not pointers.
    if (s.name == ".eh_frame" || s.name == ".eh_frame_hdr" || s.name == ".gcc_except_table") return false;
    return s.has_file_bytes() && !s.executable;
}

void scan_range(const BinaryImage& img, std::span<const std::uint8_t> bytes, Addr base, bool gap,
                std::vector<ScannedWord>& out) {
    if (bytes.size() < 8) return;
    for (std::size_t i = 0; i + 8 <= bytes.size(); ++i) {
        std::uint64_t v;
        std::memcpy(&v, bytes.data() + i, 8);
        if (v != 0 && img.is_executable(v)) out.push_back({base + i, v, gap});
    }
}

}  // namespace

std::vector<ScannedWord> scan_words(const BinaryImage& img, const FunctionSet& fs) {
    std::vector<ScannedWord> out;
    for (const auto& s : img.sections()) {
        if (!s.allocated) continue;
        auto bytes = img.section_bytes(s);
        if (bytes.empty()) continue;
        if (!s.executable) {
            if (scanned_data_section(s)) scan_range(img, bytes, s.vaddr, false, out);
            continue;
        }
        // Executable: only the runs of bytes no decoded instruction covers.
        Addr cur = s.vaddr;
        const Addr end = s.vaddr + bytes.size();
        if (auto cov = fs.covering_instruction(cur)) cur = cov->first + cov->second.length;
        while (cur < end) {
            auto it = fs.instruction_map.lower_bound(cur);
            Addr gap_end = (it == fs.instruction_map.end() || it->first >= end) ? end : it->first;
            if (gap_end > cur)
                scan_range(img, bytes.subspan(cur - s.vaddr, gap_end - cur), cur, true, out);
            if (it == fs.instruction_map.end() || it->first >= end) break;
            cur = std::max(cur, it->first + it->second.length);
        }
    }
    return out;
}

std::vector<std::pair<Addr, Addr>> function_constants(const BinaryImage& img, const FunctionCfg& f) {
    std::vector<std::pair<Addr, Addr>> out;
    for (const auto& [_, b] : f.blocks) {
        for (const auto& ins : b.instructions) {
            for (const auto& [v, w] : ins.immediates) {
                (void)w;
                Addr a = static_cast<Addr>(v);
                if (img.is_executable(a)) out.emplace_back(ins.addr, a);
            }
            if (ins.memory_operand && ins.memory_operand->absolute && !ins.is_branch() && !ins.is_call()) {
                Addr a = *ins.memory_operand->absolute;
                if (img.is_executable(a)) out.emplace_back(ins.addr, a);
            }
        }
    }
    return out;
}

std::vector<std::pair<Addr, Addr>> code_constants(const BinaryImage& img, const FunctionSet& fs) {
    std::vector<std::pair<Addr, Addr>> out;
    for (const auto& [start, f] : fs.functions) {
        auto part = function_constants(img, f);
        out.insert(out.end(), part.begin(), part.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());   // shared code
    return out;
}

std::vector<PointerCandidate> collect_candidates(const BinaryImage& img, const FunctionSet& fs) {
    std::map<Addr, PointerCandidate> by_value;
    auto section_name = [&](Addr a) {
        const Section* s = img.section_at(a);
        return s ? s->name : std::string{};
    };
    auto offer = [&](Addr value, CandidateOrigin origin, Addr where) {
        by_value.try_emplace(value, PointerCandidate{value, origin, where, section_name(where), Validation::pending, {}});
    };
    for (const auto& [site, v] : code_constants(img, fs)) offer(v, CandidateOrigin::code_constant, site);
    for (const auto& w : scan_words(img, fs))
        offer(w.value, w.in_code_gap ? CandidateOrigin::code_gap_scan : CandidateOrigin::data_scan, w.where);

    std::set<Addr> table_entries;
    for (const auto& [_, f] : fs.functions)
        for (const auto& [site, jt] : f.jump_tables) table_entries.insert(jt.targets.begin(), jt.targets.end());
    auto plts = plt_ranges(img);

    std::vector<PointerCandidate> out;
    out.reserve(by_value.size());
    for (auto& [v, c] : by_value) {
        if (fs.is_start(v)) {
            c.validated = Validation::rejected;
            c.reason = "already a function start";
        } else if (table_entries.count(v)) {
            c.origin = CandidateOrigin::jump_table_entry;
            c.validated = Validation::rejected;
            c.reason = "jump-table entry";
        } else if (fs.covering_instruction(v)) {
            c.validated = Validation::rejected;
            c.reason = fs.instruction_map.count(v) ? "inside a known function" : "middle of a decoded instruction";
        } else if (std::any_of(plts.begin(), plts.end(), [v](const AddrRange& r) { return r.contains(v); })) {
            c.validated = Validation::rejected;
            c.reason = "PLT entry";
        }
        out.push_back(std::move(c));
    }
    return out;
}

PointerScanReport pointer_scan(const BinaryImage& img, Disassembler& dis) {
    PointerScanReport report;
    std::map<Addr, PointerCandidate> pending;
    for (auto& c : collect_candidates(img, dis.function_set()))
        if (c.validated == Validation::pending) pending.emplace(c.value, std::move(c));
    dis.take_changed();

    const auto plts = plt_ranges(img);
    std::set<Addr> tried;
    std::set<Addr> table_entries;
    auto still_open = [&](Addr v) {
        const FunctionSet& fs = dis.function_set();
        return !fs.is_start(v) && !table_entries.count(v) && !fs.covering_instruction(v) &&
               std::none_of(plts.begin(), plts.end(), [v](const AddrRange& r) { return r.contains(v); });
    };
    while (!pending.empty()) {
        PointerCandidate c = std::move(pending.begin()->second);
        pending.erase(pending.begin());
        if (!tried.insert(c.value).second || !still_open(c.value)) continue;
        Speculation sp = dis.speculate(c.value);
        if (!sp.accepted) {
            c.validated = Validation::rejected;
            c.reason = sp.reason;
            report.rejected.push_back(std::move(c));
            continue;
        }
        for (Addr s : sp.new_starts) dis.add_start(s, s == c.value ? Provenance::pointer : Provenance::call_target);
        dis.run();
        c.validated = Validation::accepted;
        report.accepted.push_back(std::move(c));

        // Constants in code that just appeared feed the pending set.
        const FunctionSet& fs = dis.function_set();
        for (Addr s : dis.take_changed()) {
            auto it = fs.functions.find(s);
            if (it == fs.functions.end()) continue;
            for (const auto& [site, jt] : it->second.jump_tables)
                table_entries.insert(jt.targets.begin(), jt.targets.end());
            for (const auto& [site, v] : function_constants(img, it->second))
                if (!tried.count(v))
                    pending.try_emplace(v, PointerCandidate{v, CandidateOrigin::code_constant, site,
                                                            img.section_at(site) ? img.section_at(site)->name : "",
                                                            Validation::pending, {}});
        }
    }
    return report;
}

}  // namespace ehfetch
