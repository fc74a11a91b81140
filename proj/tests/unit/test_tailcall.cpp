#include "fixtures.hpp"
#include "pipeline.hpp"
#include "tailcall_suite.hpp"

#include <doctest.h>

using namespace ehfetch;
using namespace ehfetch::testing;

TEST_CASE("all three conditions give a tail call") {
    auto o = run_tailcall_case({});
    REQUIRE(o.decision);
    CHECK(o.decision->verdict == Verdict::tail_call);
    CHECK(o.decision->site.stack_height == 0);
    CHECK(o.target_still_start);
}

TEST_CASE("non-zero height is not a tail call") {
    TailCallCase c;
    c.height_zero = false;
    auto o = run_tailcall_case(c);
    REQUIRE(o.decision);
    CHECK(o.decision->verdict != Verdict::tail_call);
    CHECK(o.decision->site.stack_height == 8);
}

TEST_CASE("target breaking the calling convention is not a tail call") {
    TailCallCase c;
    c.target_meets_cc = false;
    auto o = run_tailcall_case(c);
    REQUIRE(o.decision);
    CHECK(o.decision->verdict == Verdict::skipped);
}

TEST_CASE("target referenced only by the jump is merged") {
    TailCallCase c;
    c.referenced_elsewhere = false;
    auto o = run_tailcall_case(c);
    REQUIRE(o.decision);
    CHECK(o.decision->verdict == Verdict::merged);
    CHECK_FALSE(o.target_still_start);
}

TEST_CASE("randomised three-condition property") {
    auto r = run_tailcall_suite(20240611u, 25);
    CHECK(r.cases == 100);
    for (const auto& f : r.failures) FAIL_CHECK(f);
}

TEST_CASE("merge pass is idempotent") {
    auto fx = find_fixture("split", "asm");
    REQUIRE(fx);
    auto img = load_binary(fx->stripped);
    DecodeCache cache(img);
    Disassembler dis(img, NoReturnDb::builtin(), cache);
    auto eh = parse_eh_frame(img);
    for (Addr a : fde_starts(eh.fdes)) dis.add_start(a, Provenance::fde);
    dis.run();
    auto frames = build_frame_info(eh);
    auto first = detect_and_merge(img, dis, frames);
    CHECK_FALSE(first.empty());
    CHECK(detect_and_merge(img, dis, frames).empty());
}

TEST_CASE("split fixtures") {
    auto split = find_fixture("split", "asm");
    REQUIRE(split);
    auto r = run_pipeline(split->stripped);
    CHECK(r.merged.size() == 1);
    CHECK(evaluate(r, split->truth_set()).false_positives.empty());

    auto rbp = find_fixture("split_rbp", "asm");
    REQUIRE(rbp);
    auto r2 = run_pipeline(rbp->stripped);
    CHECK(r2.merged.empty());
    bool skipped = false;
    for (const auto& d : r2.decisions)
        if (d.verdict == Verdict::skipped && d.reason.find("incomplete CFI") != std::string::npos) skipped = true;
    CHECK(skipped);
    CHECK(evaluate(r2, rbp->truth_set()).false_positives.size() == 1);
}
