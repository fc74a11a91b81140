#include "eh_frame.hpp"
#include "fixtures.hpp"
#include "pipeline.hpp"

#include <doctest.h>

#include <random>

using namespace ehfetch;
using namespace ehfetch::testing;

TEST_CASE("evaluate metrics") {
    std::set<Addr> truth{0x10, 0x20, 0x30};
    auto same = evaluate(truth, truth);
    CHECK(same.false_positives.empty());
    CHECK(same.false_negatives.empty());
    CHECK(same.precision == 1.0);
    CHECK(same.recall == 1.0);

    auto extra = evaluate(std::set<Addr>{0x10, 0x20, 0x30, 0x40}, truth);
    CHECK(extra.false_positives == std::vector<Addr>{0x40});
    CHECK(extra.precision == doctest::Approx(3.0 / 4.0));

    auto split = evaluate(std::set<Addr>{0x4126c0, 0x404fbe}, std::set<Addr>{0x4126c0});
    CHECK(split.false_positives == std::vector<Addr>{0x404fbe});

    auto empty = evaluate(std::set<Addr>{}, std::set<Addr>{});
    CHECK(empty.precision == 1.0);
    CHECK(empty.recall == 1.0);

    auto excluded = evaluate(std::set<Addr>{0x10, 0x500}, std::set<Addr>{0x10}, {{0x500, 0x600}});
    CHECK(excluded.false_positives.empty());
}

TEST_CASE("truth file format") {
    auto t = parse_truth("# header\n0x10\n  0x2a  # trailing\n\n0X30\n0x10\n");
    CHECK(t == std::set<Addr>{0x10, 0x2a, 0x30});
    CHECK_THROWS_AS(parse_truth("nonsense\n"), Error);
}

TEST_CASE("json emit shape") {
    DetectionResult r;
    r.binary = "a.out";
    auto j = nlohmann::json::parse(emit(r, OutputFormat::json));
    CHECK(j["binary"] == "a.out");
    CHECK(j["function_starts"].is_array());
    CHECK(j["function_starts"].empty());

    r.function_starts = {{0x1a0, Provenance::fde}, {0x2b0, Provenance::call_target}};
    j = nlohmann::json::parse(emit(r, OutputFormat::json));
    CHECK(j["function_starts"][0]["addr"] == "0x1a0");
    CHECK(j["function_starts"][1]["addr"] == "0x2b0");
    CHECK(j["function_starts"][1]["provenance"] == "call_target");
    CHECK(emit(r, OutputFormat::text) == "0x1a0\n0x2b0\n");
}

TEST_CASE("json round trip") {
    std::mt19937_64 rng(7);
    const Provenance provs[] = {Provenance::fde, Provenance::call_target, Provenance::pointer, Provenance::tail_call};
    for (int round = 0; round < 50; ++round) {
        DetectionResult r;
        r.binary = "bin-" + std::to_string(round) + " \"quoted\"";
        std::set<Addr> addrs;
        for (int i = rng() % 20; i > 0; --i) addrs.insert(rng() % 0x100000);
        for (Addr a : addrs) r.function_starts.push_back({a, provs[rng() % 4]});
        for (int i = rng() % 3; i > 0; --i) r.merged.push_back({rng() % 0x1000, rng() % 0x1000});
        for (int i = rng() % 3; i > 0; --i)
            r.diagnostics.push_back({rng() % 2 ? Severity::info : Severity::warn, "stage", "message " + std::to_string(i)});
        auto back = parse_result_json(emit(r, OutputFormat::json, true));
        CHECK(back.binary == r.binary);
        CHECK(back.function_starts == r.function_starts);
        CHECK(back.merged == r.merged);
        CHECK(back.diagnostics == r.diagnostics);
    }
}

TEST_CASE("FDE stage alone yields exactly the FDE starts") {
    auto fx = find_fixture("noreturn");
    REQUIRE(fx);
    PipelineOptions o;
    o.recursion = false;
    o.pointer_scan = false;
    o.tailcall_merge = false;
    auto r = run_pipeline(fx->stripped, o);
    CHECK(r.starts() == fde_starts(parse_eh_frame(load_binary(fx->stripped)).fdes));
}

TEST_CASE("main is found with FDE provenance") {
    auto fx = find_fixture("plain", "O2");
    REQUIRE(fx);
    Addr main = 0;
    for (const auto& s : symbols_if_present(load_binary(fx->unstripped)))
        if (s.name == "main") main = s.vaddr;
    REQUIRE(main);
    auto r = run_pipeline(fx->stripped);
    CHECK(r.provenance_of(main) == Provenance::fde);
}

TEST_CASE("stage monotonicity") {
    for (const auto& fx : load_manifest()) {
        if (fx.skipped) continue;
        auto r = run_pipeline(fx.stripped);
        for (Addr a : r.stage1_starts) CHECK_MESSAGE(r.stage2_starts.count(a), fx.name());
        for (Addr a : r.stage2_starts) CHECK_MESSAGE(r.stage3_starts.count(a), fx.name());
        std::set<Addr> removed;
        for (const auto& m : r.merged) removed.insert(m.from);
        for (const auto& x : r.rejected_fde_starts) removed.insert(x.start);
        for (Addr a : r.stage3_starts)
            if (!r.starts().count(a)) CHECK_MESSAGE(removed.count(a), fx.name(), " ", hex(a));
    }
}

TEST_CASE("batch keeps input order and reports load errors") {
    auto a = find_fixture("plain", "O2");
    auto b = find_fixture("tailcall");
    REQUIRE(a);
    REQUIRE(b);
    auto items = run_batch({a->stripped, "/nonexistent/binary", b->stripped}, {}, 2);
    REQUIRE(items.size() == 3);
    CHECK(items[0].result);
    CHECK(items[1].error);
    CHECK(items[2].result);
    CHECK(emit(*items[0].result, OutputFormat::json) == emit(run_pipeline(a->stripped), OutputFormat::json));
}
