#include "elf_image.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>

using namespace ehfetch;
using namespace ehfetch::testing;

namespace {

std::vector<std::uint8_t> elf_header(std::uint8_t cls, std::uint16_t machine) {
    std::vector<std::uint8_t> h(64, 0);
    h[0] = 0x7f; h[1] = 'E'; h[2] = 'L'; h[3] = 'F';
    h[4] = cls;
    h[5] = 1;
    h[6] = 1;
    h[16] = 2;
    h[18] = static_cast<std::uint8_t>(machine);
    h[19] = static_cast<std::uint8_t>(machine >> 8);
    return h;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::invalid_argument;
}

}  // namespace

TEST_CASE("fixture image exposes its unwind sections") {
    auto fx = find_fixture("plain", "O2");
    REQUIRE(fx);
    auto img = load_binary(fx->stripped);
    CHECK(img.section_by_name(".text"));
    CHECK(img.section_by_name(".eh_frame"));
    CHECK(img.section_by_name(".eh_frame_hdr"));
    CHECK(img.is_executable(img.entry_point()));
}

TEST_CASE("bad magic and foreign class are refused") {
    CHECK(code_of([] { BinaryImage::from_bytes({'E', 'L', 'F', 0}); }) == ErrorCode::not_elf);
    CHECK(code_of([] { BinaryImage::from_bytes(elf_header(1, 62)); }) == ErrorCode::unsupported_arch);
    CHECK(code_of([] { BinaryImage::from_bytes(elf_header(2, 40)); }) == ErrorCode::unsupported_arch);
}

TEST_CASE("read_bytes follows the section table") {
    auto fx = find_fixture("split", "asm");
    REQUIRE(fx);
    auto img = load_binary(fx->stripped);
    auto raw = img.raw();
    const Section* text = img.section_at(img.entry_point());
    REQUIRE(text);
    auto first = img.read_bytes(img.entry_point(), 1);
    CHECK(first[0] == raw[text->file_offset + (img.entry_point() - text->vaddr)]);

    CHECK(code_of([&] { img.read_bytes(0, 8); }) == ErrorCode::out_of_range);
    CHECK(code_of([&] { img.read_bytes(text->vaddr + text->size - 2, 4); }) == ErrorCode::out_of_range);

    for (const auto& s : img.sections()) {
        if (!s.has_file_bytes()) continue;
        auto bytes = img.read_bytes(s.vaddr, s.size);
        CHECK(std::equal(bytes.begin(), bytes.end(), raw.begin() + static_cast<std::ptrdiff_t>(s.file_offset)));
    }
}

TEST_CASE("allocated sections never claim the same address") {
    for (const auto& fx : load_manifest()) {
        if (fx.skipped) continue;
        auto img = load_binary(fx.stripped);
        std::vector<AddrRange> rs;
        for (const auto& s : img.sections())
            if (s.allocated && s.size) rs.push_back(s.range());
        std::sort(rs.begin(), rs.end());
        for (std::size_t i = 1; i < rs.size(); ++i) CHECK_MESSAGE(rs[i - 1].end <= rs[i].begin, fx.name());
    }
}

TEST_CASE("nobits reads are zero filled") {
    auto img = BinaryImage::synthetic({{".bss", 0x5000, {}, false, true, 64}});
    auto z = img.read_bytes(0x5010, 16);
    CHECK(std::all_of(z.begin(), z.end(), [](auto b) { return b == 0; }));
}

TEST_CASE("symbols only where present") {
    auto fx = find_fixture("plain", "O2");
    REQUIRE(fx);
    auto stripped = load_binary(fx->stripped);
    for (const auto& s : symbols_if_present(stripped)) CHECK(s.dynamic);
    auto fx_static = find_fixture("split", "asm");
    REQUIRE(fx_static);
    CHECK(symbols_if_present(load_binary(fx_static->stripped)).empty());

    auto full = load_binary(fx->unstripped);
    auto syms = symbols_if_present(full);
    auto main = std::find_if(syms.begin(), syms.end(), [](const Symbol& s) { return s.name == "main"; });
    REQUIRE(main != syms.end());
    CHECK(fx->truth_set().count(main->vaddr));
}
