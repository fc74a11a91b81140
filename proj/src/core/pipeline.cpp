#include "pipeline.hpp"

#include "cfi.hpp"
#include "eh_frame.hpp"
#include "noreturn.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace ehfetch {

std::set<Addr> DetectionResult::starts() const {
    std::set<Addr> s;
    for (const auto& e : function_starts) s.insert(e.addr);
    return s;
}

std::optional<Provenance> DetectionResult::provenance_of(Addr a) const {
    auto it = std::lower_bound(function_starts.begin(), function_starts.end(), a,
                               [](const StartEntry& e, Addr x) { return e.addr < x; });
    if (it == function_starts.end() || it->addr != a) return std::nullopt;
    return it->provenance;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::set<Addr> current_starts(const Disassembler& d) {
    std::set<Addr> s;
    for (const auto& [a, _] : d.function_set().functions) s.insert(a);
    return s;
}

void append(Diagnostics& to, const Diagnostics& from) { to.insert(to.end(), from.begin(), from.end()); }

}  // namespace

DetectionResult run_pipeline(const std::string& path, const PipelineOptions& opts) {
    return run_pipeline(BinaryImage::load(path), opts);
}

DetectionResult run_pipeline(const BinaryImage& img, const PipelineOptions& opts) {
    DetectionResult r;
    r.binary = img.path();
    r.plt_ranges = plt_ranges(img);

    NoReturnDb db = NoReturnDb::builtin();
    if (opts.noreturn_list) db.extend_from_file(*opts.noreturn_list);

    auto t0 = Clock::now();
    EhFrame eh = parse_eh_frame(img);
    append(r.diagnostics, eh.diagnostics);
    r.stage1_starts = fde_starts(eh.fdes);
    r.timings_ms["fde"] = ms_since(t0);

    if (!opts.recursion) {
        for (Addr a : r.stage1_starts) r.function_starts.push_back({a, Provenance::fde});
        r.stage2_starts = r.stage3_starts = r.stage1_starts;
        return r;
    }

    t0 = Clock::now();
    DecodeCache cache(img);
    Disassembler dis(img, db, cache);
    std::vector<std::size_t> order(eh.fdes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (opts.shuffle_seed) {
        std::mt19937_64 rng(*opts.shuffle_seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    for (std::size_t i : order) {
        const Fde& f = eh.fdes[i];
        if (!img.is_executable(f.pc_begin)) continue;   // already diagnosed by the parser
        dis.add_start(f.pc_begin, Provenance::fde, i, {f.range()});
    }
    dis.run();
    r.stage2_starts = current_starts(dis);
    r.timings_ms["recursive"] = ms_since(t0);

    if (opts.pointer_scan) {
        t0 = Clock::now();
        auto rep = pointer_scan(img, dis);
        r.accepted_pointers = rep.accepted;
        r.timings_ms["pointer_scan"] = ms_since(t0);
    }
    r.stage3_starts = current_starts(dis);

    if (opts.tailcall_merge) {
        t0 = Clock::now();
        r.rejected_fde_starts = reject_invalid_fde_starts(dis, cache);
        if (!r.rejected_fde_starts.empty() && opts.pointer_scan) {
            auto rep = pointer_scan(img, dis);
            r.accepted_pointers.insert(r.accepted_pointers.end(), rep.accepted.begin(), rep.accepted.end());
        }
        FrameInfo frames = build_frame_info(eh);
        r.decisions = detect_and_merge(img, dis, frames);
        r.timings_ms["tailcall"] = ms_since(t0);
    }

    const FunctionSet& fs = dis.function_set();
    for (const auto& [a, f] : fs.functions) r.function_starts.push_back({a, f.provenance});
    append(r.diagnostics, fs.diagnostics);
    for (const auto& p : r.accepted_pointers)
        r.diagnostics.push_back({Severity::info, "pointer_scan",
                                 "accepted " + hex(p.value) + " (" + std::string(to_string(p.origin)) + " at " +
                                     hex(p.where) + ")"});
    for (const auto& rej : r.rejected_fde_starts)
        r.diagnostics.push_back({Severity::warn, "tailcall", "rejected FDE start " + hex(rej.start) + ": " + rej.reason});
    for (const auto& d : r.decisions) {
        std::string msg = std::string(to_string(d.verdict)) + " jump " + hex(d.site.jump) + " in " + hex(d.site.owner) +
                          " -> " + hex(d.site.target) + ": " + d.reason;
        r.diagnostics.push_back({Severity::info, "tailcall", msg});
        if (d.verdict == Verdict::merged) r.merged.push_back({d.site.target, d.site.owner});
    }
    return r;
}

std::vector<BatchItem> run_batch(const std::vector<std::string>& paths, const PipelineOptions& opts, unsigned jobs) {
    std::vector<BatchItem> items(paths.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < paths.size();) {
            items[i].path = paths[i];
            try {
                items[i].result = run_pipeline(paths[i], opts);
            } catch (const Error& e) {
                items[i].error = e;
            } catch (const std::exception& e) {
                items[i].error = Error(ErrorCode::io, e.what());
            }
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(paths.size(), 1))));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    }
    return items;
}

DetectionReport evaluate(const std::set<Addr>& detected, const std::set<Addr>& truth,
                         const std::vector<AddrRange>& excluded) {
    auto keep = [&](Addr a) {
        return std::none_of(excluded.begin(), excluded.end(), [a](const AddrRange& r) { return r.contains(a); });
    };
    DetectionReport rep;
    for (Addr a : detected) {
        if (!keep(a)) continue;
        (truth.count(a) ? rep.true_positives : rep.false_positives).push_back(a);
    }
    for (Addr a : truth)
        if (keep(a) && !detected.count(a)) rep.false_negatives.push_back(a);
    const double tp = static_cast<double>(rep.true_positives.size());
    if (!rep.true_positives.empty() || !rep.false_positives.empty())
        rep.precision = tp / (tp + static_cast<double>(rep.false_positives.size()));
    if (!rep.true_positives.empty() || !rep.false_negatives.empty())
        rep.recall = tp / (tp + static_cast<double>(rep.false_negatives.size()));
    return rep;
}

DetectionReport evaluate(const DetectionResult& result, const std::set<Addr>& truth) {
    return evaluate(result.starts(), truth, result.plt_ranges);
}

std::set<Addr> parse_truth(std::string_view text) {
    std::set<Addr> out;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;
        if (tok.size() < 3 || tok[0] != '0' || (tok[1] != 'x' && tok[1] != 'X'))
            throw Error(ErrorCode::invalid_argument, "truth line " + std::to_string(lineno) + ": expected 0x address");
        std::size_t used = 0;
        Addr a = 0;
        try {
            a = std::stoull(tok.substr(2), &used, 16);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() - 2)
            throw Error(ErrorCode::invalid_argument, "truth line " + std::to_string(lineno) + ": bad address " + tok);
        out.insert(a);
    }
    return out;
}

std::set<Addr> read_truth_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error(ErrorCode::io, "cannot read truth file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_truth(ss.str());
}

std::string emit(const DetectionResult& r, OutputFormat fmt, bool include_diagnostics) {
    if (fmt == OutputFormat::text) {
        std::string out;
        for (const auto& e : r.function_starts) out += hex(e.addr) + "\n";
        return out;
    }
    nlohmann::ordered_json j;
    j["binary"] = r.binary;
    j["function_starts"] = nlohmann::ordered_json::array();
    for (const auto& e : r.function_starts)
        j["function_starts"].push_back({{"addr", hex(e.addr)}, {"provenance", std::string(to_string(e.provenance))}});
    j["merged"] = nlohmann::ordered_json::array();
    for (const auto& m : r.merged) j["merged"].push_back({{"from", hex(m.from)}, {"into", hex(m.into)}});
    j["diagnostics"] = nlohmann::ordered_json::array();
    if (include_diagnostics)
        for (const auto& d : r.diagnostics)
            j["diagnostics"].push_back({{"severity", d.severity == Severity::warn ? "warn" : "info"},
                                        {"stage", d.stage},
                                        {"message", d.message}});
    return j.dump(2) + "\n";
}

namespace {

Addr parse_hex_field(const nlohmann::json& v) {
    const std::string s = v.get<std::string>();
    if (s.size() < 3 || s[0] != '0' || s[1] != 'x') throw Error(ErrorCode::invalid_argument, "bad address " + s);
    return std::stoull(s.substr(2), nullptr, 16);
}

}  // namespace

DetectionResult parse_result_json(std::string_view text) {
    DetectionResult r;
    try {
        auto j = nlohmann::json::parse(text);
        r.binary = j.at("binary").get<std::string>();
        for (const auto& e : j.at("function_starts")) {
            auto p = provenance_from_string(e.at("provenance").get<std::string>());
            if (!p) throw Error(ErrorCode::invalid_argument, "unknown provenance");
            r.function_starts.push_back({parse_hex_field(e.at("addr")), *p});
        }
        for (const auto& m : j.at("merged")) r.merged.push_back({parse_hex_field(m.at("from")), parse_hex_field(m.at("into"))});
        for (const auto& d : j.at("diagnostics"))
            r.diagnostics.push_back({d.at("severity").get<std::string>() == "warn" ? Severity::warn : Severity::info,
                                     d.at("stage").get<std::string>(), d.at("message").get<std::string>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_argument, std::string("malformed result JSON: ") + e.what());
    }
    return r;
}

std::string frames_dump(const BinaryImage& img) {
    EhFrame eh = parse_eh_frame(img);
    std::ostringstream out;
    out << ".eh_frame at " << hex(eh.section_vaddr) << ", " << eh.cies.size() << " CIE(s), " << eh.fdes.size()
        << " FDE(s)\n";
    for (const auto& c : eh.cies)
        out << "CIE @" << hex(c.offset_in_section) << " version=" << int(c.version) << " aug=\"" << c.augmentation
            << "\" code_align=" << c.code_align << " data_align=" << c.data_align
            << " ra=" << c.return_address_column << "\n";
    for (std::size_t i = 0; i < eh.fdes.size(); ++i) {
        const Fde& f = eh.fdes[i];
        const Cie& c = eh.cie_of(f);
        out << "FDE #" << i << " @" << hex(f.offset_in_section) << " cie=@" << hex(c.offset_in_section) << " pc="
            << hex(f.pc_begin) << ".." << hex(f.pc_begin + f.pc_range) << "\n";
        try {
            for (const auto& ins : decode_cfi(c, f)) out << "    " << (ins.from_cie ? "[cie] " : "") << describe(ins) << "\n";
        } catch (const Error& e) {
            out << "    <" << e.what() << ">\n";
        }
        auto t = stack_heights(c, f);
        if (!t.complete) out << "  heights: incomplete (" << t.incompleteness_reason << ")\n";
        else {
            out << "  heights:";
            for (const auto& h : t.entries) out << " " << hex(h.addr) << "=" << h.height;
            out << "\n";
        }
    }
    for (const auto& d : eh.diagnostics) out << "note: " << d.message << "\n";
    return out.str();
}

}  // namespace ehfetch
