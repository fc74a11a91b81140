#pragma once

// Helpers for assembling synthetic images: a tiny .eh_frame writer and
// little-endian byte emitters.

#include "common.hpp"
#include "elf_image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ehfetch::testing {

using Bytes = std::vector<std::uint8_t>;

inline void put_u32(Bytes& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(Bytes& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_uleb(Bytes& b, std::uint64_t v) {
    do {
        std::uint8_t byte = v & 0x7f;
        v >>= 7;
        if (v) byte |= 0x80;
        b.push_back(byte);
    } while (v);
}

// rel32 jump/call from `at` (instruction of `len` bytes) to `to`.
inline void put_rel32(Bytes& b, Addr at, std::size_t len, Addr to) {
    put_u32(b, static_cast<std::uint32_t>(static_cast<std::int64_t>(to) - static_cast<std::int64_t>(at + len)));
}

// CFI opcodes used by the tests.
namespace cfa {
inline Bytes def_cfa(std::uint8_t reg, std::uint8_t off) { return {0x0c, reg, off}; }
inline Bytes def_cfa_offset(std::uint8_t off) { return {0x0e, off}; }
inline Bytes def_cfa_register(std::uint8_t reg) { return {0x0d, reg}; }
inline Bytes advance(std::uint8_t delta) { return {static_cast<std::uint8_t>(0x40 | delta)}; }
inline Bytes offset(std::uint8_t reg, std::uint8_t factored) {
    return {static_cast<std::uint8_t>(0x80 | reg), factored};
}
inline Bytes remember() { return {0x0a}; }
inline Bytes restore_state() { return {0x0b}; }
}  // namespace cfa

inline Bytes cat(std::initializer_list<Bytes> parts) {
    Bytes out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

struct FdeSpec {
    Addr begin = 0;
    std::uint64_t range = 0;
    Bytes cfi;   // FDE instructions after the CIE's def_cfa rsp+8
};

/// One "zR" CIE (pcrel sdata4, initial rule rsp+8) followed by one FDE per
/// spec and a terminator. `cie_extra` is appended to the CIE's initial
/// instructions.
class EhFrameBuilder {
public:
    explicit EhFrameBuilder(Addr vaddr, Bytes cie_initial = cfa::def_cfa(7, 8)) : vaddr_(vaddr) {
        Bytes body;
        put_u32(body, 0);        // CIE id
        body.push_back(1);       // version
        body.push_back('z');
        body.push_back('R');
        body.push_back(0);
        put_uleb(body, 1);       // code align
        body.push_back(0x78);    // data align -8
        body.push_back(16);      // return address column
        put_uleb(body, 1);       // augmentation data length
        body.push_back(0x1b);    // pcrel | sdata4
        body.insert(body.end(), cie_initial.begin(), cie_initial.end());
        while ((body.size() + 4) % 8) body.push_back(0);
        put_u32(out_, static_cast<std::uint32_t>(body.size()));
        out_.insert(out_.end(), body.begin(), body.end());
    }

    EhFrameBuilder& fde(const FdeSpec& f) {
        std::size_t start = out_.size();
        Bytes body;
        put_u32(body, static_cast<std::uint32_t>(start + 4));   // back to the CIE at offset 0
        Addr field = vaddr_ + start + 8;
        put_u32(body, static_cast<std::uint32_t>(static_cast<std::int64_t>(f.begin) - static_cast<std::int64_t>(field)));
        put_u32(body, static_cast<std::uint32_t>(f.range));
        put_uleb(body, 0);
        body.insert(body.end(), f.cfi.begin(), f.cfi.end());
        while ((body.size() + 4) % 8) body.push_back(0);
        put_u32(out_, static_cast<std::uint32_t>(body.size()));
        out_.insert(out_.end(), body.begin(), body.end());
        return *this;
    }

    Bytes bytes() const {
        Bytes b = out_;
        put_u32(b, 0);
        return b;
    }

    SyntheticSection section() const { return {".eh_frame", vaddr_, bytes(), false, false, 0}; }

private:
    Addr vaddr_;
    Bytes out_;
};

inline SyntheticSection text_section(Addr vaddr, Bytes code) {
    return {".text", vaddr, std::move(code), true, false, 0};
}

inline SyntheticSection data_section(std::string name, Addr vaddr, Bytes data) {
    return {std::move(name), vaddr, std::move(data), false, true, 0};
}

/// Places code fragments at fixed offsets from `base`, padding with int3.
class CodeLayout {
public:
    explicit CodeLayout(Addr base) : base_(base) {}
    CodeLayout& at(Addr addr, const Bytes& code) {
        std::size_t off = addr - base_;
        if (bytes_.size() < off + code.size()) bytes_.resize(off + code.size(), 0xcc);
        std::copy(code.begin(), code.end(), bytes_.begin() + static_cast<std::ptrdiff_t>(off));
        return *this;
    }
    Bytes bytes() const { return bytes_; }

private:
    Addr base_;
    Bytes bytes_;
};

}  // namespace ehfetch::testing
