#include "disassembler.hpp"
#include "eh_frame.hpp"
#include "fixtures.hpp"
#include "pointer_scan.hpp"
#include "synthetic.hpp"
#include "tailcall.hpp"

#include <doctest.h>

#include <algorithm>

using namespace ehfetch;
using namespace ehfetch::testing;

namespace {

Addr only_non_fde_truth(const FixtureEntry& fx) {
    auto img = load_binary(fx.stripped);
    auto fdes = fde_starts(parse_eh_frame(img).fdes);
    std::vector<Addr> extra;
    for (Addr t : fx.truth_set())
        if (!fdes.count(t)) extra.push_back(t);
    REQUIRE(extra.size() == 1);
    return extra[0];
}

}  // namespace

TEST_CASE("data words pointing at code become candidates") {
    auto fx = find_fixture("asm_ptr");
    REQUIRE(fx);
    Addr callback = only_non_fde_truth(*fx);
    auto img = load_binary(fx->stripped);
    auto fs = recursive_disassemble(img, fde_starts(parse_eh_frame(img).fdes));
    CHECK_FALSE(fs.is_start(callback));
    auto cands = collect_candidates(img, fs);
    auto it = std::find_if(cands.begin(), cands.end(), [&](const auto& c) { return c.value == callback; });
    REQUIRE(it != cands.end());
    CHECK(it->origin == CandidateOrigin::data_scan);
    CHECK(it->section == ".data");
    CHECK(it->validated == Validation::pending);
}

TEST_CASE("pointer scan accepts the planted callback only") {
    auto fx = find_fixture("asm_ptr");
    REQUIRE(fx);
    Addr callback = only_non_fde_truth(*fx);
    auto img = load_binary(fx->stripped);
    DecodeCache cache(img);
    Disassembler dis(img, NoReturnDb::builtin(), cache);
    for (Addr a : fde_starts(parse_eh_frame(img).fdes)) dis.add_start(a, Provenance::fde);
    dis.run();
    auto report = pointer_scan(img, dis);
    REQUIRE(report.accepted.size() == 1);
    CHECK(report.accepted[0].value == callback);
    CHECK(dis.function_set().functions.at(callback).provenance == Provenance::pointer);
}

TEST_CASE("speculation rejects bad candidates") {
    // f: mov eax, edi; ret      then: garbage, a read of rbx, and a jump into f's middle
    CodeLayout code(0x1000);
    code.at(0x1000, {0x89, 0xf8, 0xc3})
        .at(0x1010, {0x06})
        .at(0x1020, {0x89, 0xd8, 0xc3})
        .at(0x1030, {0xeb, 0xcf})     // jmp 0x1001
        .at(0x1040, {0x8d, 0x47, 0x01, 0xc3});   // lea eax, [rdi+1]; ret
    auto img = BinaryImage::synthetic({text_section(0x1000, code.bytes())});
    DecodeCache cache(img);
    Disassembler dis(img, NoReturnDb::builtin(), cache);
    dis.add_start(0x1000, Provenance::fde);
    dis.run();
    CHECK_FALSE(dis.speculate(0x1010).accepted);
    CHECK_FALSE(dis.speculate(0x1020).accepted);
    CHECK_FALSE(dis.speculate(0x1030).accepted);
    CHECK_FALSE(dis.speculate(0x1001).accepted);
    CHECK(dis.speculate(0x1040).accepted);
    CHECK_FALSE(dis.has_start(0x1040));   // speculation commits nothing
}

TEST_CASE("misaligned FDE start is replaced by the real one") {
    auto fx = find_fixture("misaligned_fde");
    REQUIRE(fx);
    auto r = run_pipeline(fx->stripped);
    REQUIRE(r.rejected_fde_starts.size() == 1);
    Addr bogus = r.rejected_fde_starts[0].start;
    CHECK(r.stage1_starts.count(bogus));
    CHECK_FALSE(r.starts().count(bogus));
    CHECK(r.provenance_of(bogus + 1) == Provenance::pointer);
    auto rep = evaluate(r, fx->truth_set());
    CHECK(rep.false_positives.empty());
    CHECK(rep.false_negatives.empty());
}
