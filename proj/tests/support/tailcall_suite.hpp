#pragma once

// Synthetic source/target/witness triples for the tail-call decision.
//
// Layout (all functions have an FDE with complete CFI):
//   f  at 0x1000 + pad:  [push rbx]  mov edi, imm  [pop rbx]?  jmp g
//   g  at 0x1100 + pad:  reads an argument register or, when it must break
//                        the calling convention, a callee-saved one; ret
//   h  at 0x1200:        call g; ret   (present when g is referenced elsewhere)
// `unbalanced` leaves rbx pushed at the jump, so the height there is 8.

#include "disassembler.hpp"
#include "eh_frame.hpp"
#include "noreturn.hpp"
#include "synthetic.hpp"
#include "tailcall.hpp"

#include <random>
#include <sstream>
#include <string>

namespace ehfetch::testing {

struct TailCallCase {
    bool height_zero = true;
    bool target_meets_cc = true;
    bool referenced_elsewhere = true;
    unsigned pad_f = 0;
    unsigned pad_g = 0;
    unsigned arg_reg = 0;   // which argument register g reads

    Addr f() const { return 0x1000 + pad_f; }
    Addr g() const { return 0x1100 + pad_g; }
};

struct TailCallOutcome {
    std::optional<MergeDecision> decision;
    bool target_still_start = false;
    std::string describe;
};

inline TailCallOutcome run_tailcall_case(const TailCallCase& c) {
    CodeLayout code(0x1000);
    Bytes f;
    if (!c.height_zero) f.push_back(0x53);                  // push rbx
    f.insert(f.end(), {0xbf, 0x07, 0x00, 0x00, 0x00});      // mov edi, 7
    Addr jmp_at = c.f() + f.size();
    f.push_back(0xe9);
    put_rel32(f, jmp_at, 5, c.g());
    code.at(c.f(), f);

    // mov eax, <arg>  (89 /r with reg field = source)
    static const std::uint8_t arg_modrm[] = {0xf8, 0xf0, 0xd0, 0xc8};   // edi esi edx ecx
    Bytes g{0x89, c.target_meets_cc ? arg_modrm[c.arg_reg % 4] : std::uint8_t{0xd8}, 0xc3};   // else ebx
    code.at(c.g(), g);

    Bytes h{0xe8};
    put_rel32(h, 0x1200, 5, c.g());
    h.push_back(0xc3);
    if (c.referenced_elsewhere) code.at(0x1200, h);

    Bytes fcfi = c.height_zero ? Bytes{} : cat({cfa::advance(1), cfa::def_cfa_offset(16)});
    EhFrameBuilder eh(0x3000);
    eh.fde({c.f(), f.size(), fcfi}).fde({c.g(), g.size(), {}});
    if (c.referenced_elsewhere) eh.fde({0x1200, h.size(), {}});

    auto img = BinaryImage::synthetic({text_section(0x1000, code.bytes()), eh.section()});
    DecodeCache cache(img);
    Disassembler dis(img, NoReturnDb::builtin(), cache);
    auto frame = parse_eh_frame(img);
    for (Addr a : fde_starts(frame.fdes)) dis.add_start(a, Provenance::fde);
    dis.run();
    auto decisions = detect_and_merge(img, dis, build_frame_info(frame));

    TailCallOutcome out;
    for (const auto& d : decisions)
        if (d.site.jump == jmp_at) out.decision = d;
    out.target_still_start = dis.has_start(c.g());
    std::ostringstream ss;
    ss << "height0=" << c.height_zero << " cc=" << c.target_meets_cc << " refs=" << c.referenced_elsewhere
       << " pad=" << c.pad_f << "/" << c.pad_g << " verdict="
       << (out.decision ? std::string(to_string(out.decision->verdict)) + " (" + out.decision->reason + ")" : "none");
    out.describe = ss.str();
    return out;
}

struct SuiteResult {
    int cases = 0;
    std::vector<std::string> failures;
};

/// Randomised layouts for each of the four condition patterns: all three
/// hold, or exactly one fails. Only the first yields tail_call.
inline SuiteResult run_tailcall_suite(unsigned seed, int rounds) {
    SuiteResult r;
    std::mt19937 rng(seed);
    std::uniform_int_distribution<unsigned> pad(0, 0x30), arg(0, 3);
    for (int i = 0; i < rounds; ++i) {
        for (int failing = -1; failing < 3; ++failing) {
            TailCallCase c;
            c.height_zero = failing != 0;
            c.target_meets_cc = failing != 1;
            c.referenced_elsewhere = failing != 2;
            c.pad_f = pad(rng);
            c.pad_g = pad(rng);
            c.arg_reg = arg(rng);
            auto o = run_tailcall_case(c);
            ++r.cases;
            bool is_tail = o.decision && o.decision->verdict == Verdict::tail_call;
            bool ok = o.decision && is_tail == (failing == -1);
            if (failing == -1) ok = ok && o.target_still_start;
            if (!ok) r.failures.push_back(o.describe);
        }
    }
    return r;
}

}  // namespace ehfetch::testing
