#include "callconv.hpp"
#include "decoder.hpp"
#include "disassembler.hpp"
#include "eh_frame.hpp"
#include "fixtures.hpp"
#include "noreturn.hpp"
#include "synthetic.hpp"

#include <doctest.h>

#include <algorithm>

using namespace ehfetch;
using namespace ehfetch::testing;

namespace {

Addr symbol(const BinaryImage& img, std::string_view name) {
    for (const auto& s : symbols_if_present(img))
        if (s.name == name && s.vaddr) return s.vaddr;
    FAIL("no symbol " << name);
    return 0;
}

struct Loaded {
    BinaryImage img;
    DecodeCache cache{img};
    Disassembler dis{img, NoReturnDb::builtin(), cache};

    explicit Loaded(BinaryImage i) : img(std::move(i)) {
        for (Addr a : fde_starts(parse_eh_frame(img).fdes)) dis.add_start(a, Provenance::fde);
        dis.run();
    }
};

}  // namespace

TEST_CASE("decoder basics") {
    auto img = BinaryImage::synthetic({text_section(0x1000, {0x55, 0x48, 0x89, 0xe5, 0x06, 0xc3})});
    auto push = decode_at(img, 0x1000);
    CHECK(push.length == 1);
    CHECK(push.kind == InsnKind::push);
    auto mov = decode_at(img, 0x1001);
    CHECK(mov.length == 3);
    CHECK(mov.op == Op::mov);
    CHECK((mov.writes & bit(reg::rbp)));
    CHECK((mov.reads & bit(reg::rsp)));
    CHECK_THROWS_AS(decode_at(img, 0x1004), Error);
    CHECK_THROWS_AS(decode_at(img, 0x2000), Error);
    CHECK(decode_at(img, 0x1005).kind == InsnKind::ret);
}

TEST_CASE("recursive disassembly follows direct calls") {
    // f: push rbp; call g; pop rbp; ret        g: mov eax, edi; ret
    CodeLayout code(0x1000);
    Bytes f{0x55, 0xe8};
    put_rel32(f, 0x1001, 5, 0x1100);
    f.push_back(0x5d);
    f.push_back(0xc3);
    code.at(0x1000, f).at(0x1100, {0x89, 0xf8, 0xc3});
    auto img = BinaryImage::synthetic({text_section(0x1000, code.bytes())});
    auto fs = recursive_disassemble(img, {0x1000});

    REQUIRE(fs.is_start(0x1000));
    REQUIRE(fs.is_start(0x1100));
    CHECK(fs.functions.at(0x1100).provenance == Provenance::call_target);
    const auto& fc = fs.functions.at(0x1000);
    CHECK(fc.calls == std::vector<std::pair<Addr, Addr>>{{0x1001, 0x1100}});
    CHECK(fc.contains_instruction(0x1007));
    CHECK(fc.status == ReturnStatus::returns);
    CHECK_FALSE(in_existing_instruction(fs, 0x1001));
    CHECK(in_existing_instruction(fs, 0x1002));
}

TEST_CASE("mutually recursive pair with a ret returns") {
    // a: test edi,edi; je out; call b; out: ret     b: call a; ret
    CodeLayout code(0x1000);
    Bytes a{0x85, 0xff, 0x74, 0x05, 0xe8};
    put_rel32(a, 0x1004, 5, 0x1100);
    a.push_back(0xc3);
    Bytes b{0xe8};
    put_rel32(b, 0x1100, 5, 0x1000);
    b.push_back(0xc3);
    code.at(0x1000, a).at(0x1100, b);
    auto img = BinaryImage::synthetic({text_section(0x1000, code.bytes())});
    auto fs = recursive_disassemble(img, {0x1000, 0x1100});
    CHECK(fs.functions.at(0x1000).status == ReturnStatus::returns);
    CHECK(fs.functions.at(0x1100).status == ReturnStatus::returns);
}

TEST_CASE("code after a non-returning call is not disassembled") {
    // f: call g; <garbage>       g: jmp g (spins, never returns)
    CodeLayout code(0x1000);
    Bytes f{0xe8};
    put_rel32(f, 0x1000, 5, 0x1100);
    f.push_back(0x06);   // invalid in 64-bit mode
    code.at(0x1000, f).at(0x1100, {0xeb, 0xfe});
    auto img = BinaryImage::synthetic({text_section(0x1000, code.bytes())});
    auto fs = recursive_disassemble(img, {0x1000});
    REQUIRE(fs.is_start(0x1000));
    CHECK(fs.functions.at(0x1100).status == ReturnStatus::noreturn);
    CHECK(fs.functions.at(0x1000).status == ReturnStatus::noreturn);
    CHECK(fs.functions.at(0x1000).suppressed_fallthroughs == std::vector<Addr>{0x1000});
}

TEST_CASE("noreturn wrappers from the fixture") {
    auto fx = find_fixture("noreturn");
    REQUIRE(fx);
    Loaded l(load_binary(fx->unstripped));
    for (auto name : {"die", "fatal", "crash"}) CHECK_MESSAGE(l.dis.status(symbol(l.img, name)) == ReturnStatus::noreturn, std::string(name));
    for (auto name : {"checked_div", "pick", "main"})
        CHECK_MESSAGE(l.dis.status(symbol(l.img, name)) == ReturnStatus::returns, std::string(name));
}

TEST_CASE("error call sites") {
    auto fx = find_fixture("errorcall");
    REQUIRE(fx);
    auto sites = nlohmann::json::parse(slurp(fx->error_sites));
    Loaded l(load_binary(fx->stripped));
    std::set<Addr> suppressed;
    for (const auto& [s, f] : l.dis.function_set().functions)
        suppressed.insert(f.suppressed_fallthroughs.begin(), f.suppressed_fallthroughs.end());
    for (const auto& s : sites) {
        Addr site = std::stoull(s["site"].get<std::string>(), nullptr, 16);
        bool nonzero = s["status"].get<int>() != 0;
        CHECK_MESSAGE(suppressed.count(site) == (nonzero ? 1u : 0u), hex(site));
    }
}

TEST_CASE("noreturn list parsing") {
    auto db = NoReturnDb::parse("# comment\nmy_panic   # trailing\n\n  other_fatal\n");
    CHECK(db.is_noreturn("my_panic"));
    CHECK(db.is_noreturn("other_fatal"));
    CHECK_FALSE(db.is_noreturn("comment"));
    auto builtin = NoReturnDb::builtin();
    for (auto n : {"exit", "abort", "_exit", "__stack_chk_fail", "__assert_fail"}) CHECK_MESSAGE(builtin.is_noreturn(n), n);
    CHECK(builtin.is_conditional("error"));
    CHECK(builtin.is_conditional("error_at_line"));
    CHECK_FALSE(builtin.is_noreturn("printf"));
}

TEST_CASE("jump tables in the switch fixture") {
    for (auto variant : {"pie", "nopie"}) {
        auto fx = find_fixture("switch", variant);
        REQUIRE(fx);
        Loaded l(load_binary(fx->unstripped));
        const auto& fns = l.dis.function_set().functions;
        for (auto [name, cases] : {std::pair{"dispatch", 8u}, std::pair{"weekday", 7u}}) {
            const auto& f = fns.at(symbol(l.img, name));
            REQUIRE_MESSAGE(f.jump_tables.size() == 1, variant, " ", name);
            const auto& jt = f.jump_tables.begin()->second;
            CHECK(jt.index_bound == cases);
            CHECK(jt.targets.size() == cases);
            for (Addr t : jt.targets) CHECK(f.contains_instruction(t));
            CHECK(f.unresolved_jumps.empty());
        }
    }
}

TEST_CASE("bound check through a register alias") {
    auto fx = find_fixture("alias_jt");
    REQUIRE(fx);
    Loaded l(load_binary(fx->unstripped));
    const auto& f = l.dis.function_set().functions.at(symbol(l.img, "classify"));
    REQUIRE(f.jump_tables.size() == 1);
    CHECK(f.jump_tables.begin()->second.index_bound == 5);
}

TEST_CASE("calling convention check") {
    auto check = [](Bytes code) {
        auto img = BinaryImage::synthetic({text_section(0x1000, std::move(code))});
        auto fs = recursive_disassemble(img, {0x1000});
        return check_calling_convention(build_graph(fs.functions.at(0x1000)));
    };
    CHECK_FALSE(check({0x89, 0xf8, 0xc3}));                     // mov eax, edi; ret
    CHECK_FALSE(check({0x53, 0x48, 0x89, 0xfb, 0x5b, 0xc3}));   // push rbx; mov rbx, rdi; pop rbx; ret
    CHECK_FALSE(check({0x84, 0xc0, 0xc3}));                     // test al, al; ret
    auto v = check({0x89, 0xd8, 0xc3});                         // mov eax, ebx; ret
    REQUIRE(v);
    CHECK(v->reg == reg::rbx);
    CHECK(v->addr == 0x1000);
    CHECK(check({0x48, 0x8b, 0x00, 0xc3}));                     // mov rax, [rax]; ret
}
