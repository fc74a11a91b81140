#pragma once

#include "common.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ehfetch {

enum class SectionKind { progbits, nobits, symtab, other };

struct Section {
    std::string name;
    Addr vaddr = 0;
    std::uint64_t size = 0;
    std::uint64_t file_offset = 0;
    bool executable = false;
    bool writable = false;
    bool allocated = false;
    SectionKind kind = SectionKind::other;
    std::uint32_t type = 0;     // raw sh_type
    std::uint64_t entsize = 0;
    std::uint32_t link = 0;     // raw sh_link

    AddrRange range() const { return {vaddr, vaddr + size}; }
    bool has_file_bytes() const { return allocated && kind != SectionKind::nobits; }
};

struct Segment {
    Addr vaddr = 0;
    std::uint64_t memsz = 0;
    std::uint64_t filesz = 0;
    bool readable = false;
    bool writable = false;
    bool executable = false;
};

struct Symbol {
    Addr vaddr = 0;
    std::string name;
    std::uint64_t size = 0;
    bool dynamic = false;   // came from .dynsym
};

/// Section description for images assembled in memory (tests, fixtures).
struct SyntheticSection {
    std::string name;
    Addr vaddr = 0;
    std::vector<std::uint8_t> bytes;
    bool executable = false;
    bool writable = false;
    std::uint64_t nobits_size = 0;  // when non-zero the section is .bss-like
};

/// An ELF64 little-endian x86-64 image, immutable after load.
class BinaryImage {
public:
    static BinaryImage load(const std::string& path);
    static BinaryImage from_bytes(std::vector<std::uint8_t> raw, std::string path = "<memory>");
    static BinaryImage synthetic(std::vector<SyntheticSection> sections, Addr entry = 0);

    const std::string& path() const { return path_; }
    Addr entry_point() const { return entry_; }
    bool is_pie() const { return is_pie_; }
    const std::vector<Section>& sections() const { return sections_; }
    const std::vector<Segment>& segments() const { return segments_; }
    std::span<const std::uint8_t> raw() const { return raw_; }

    const Section* section_by_name(std::string_view name) const;
    /// Allocated section containing vaddr, if any.
    const Section* section_at(Addr vaddr) const;
    bool is_executable(Addr vaddr) const;
    bool is_mapped(Addr vaddr) const { return section_at(vaddr) != nullptr; }

    /// Bytes of [vaddr, vaddr+len) from a single allocated section. nobits
    /// ranges read as zeros. Throws Error(out_of_range).
    std::vector<std::uint8_t> read_bytes(Addr vaddr, std::uint64_t len) const;

    /// Zero-copy view from vaddr to the end of its progbits section (at most
    /// max_len bytes). Empty when unmapped or nobits.
    std::span<const std::uint8_t> view(Addr vaddr, std::uint64_t max_len) const;

    /// Raw bytes of a section's file contents (empty for nobits).
    std::span<const std::uint8_t> section_bytes(const Section& s) const;

    std::optional<std::uint64_t> read_u64(Addr vaddr) const;

    /// GOT slot address -> imported symbol name, from .rela.plt / .rela.dyn.
    /// These survive stripping.
    const std::map<Addr, std::string>& import_slots() const { return import_slots_; }

    /// Function symbols from .symtab and .dynsym. For evaluation only.
    std::vector<Symbol> symbols_if_present() const;

private:
    void parse();
    void parse_imports();
    std::vector<Symbol> read_symbols(const Section& symtab, bool dynamic) const;

    std::string path_;
    std::vector<std::uint8_t> raw_;
    Addr entry_ = 0;
    bool is_pie_ = false;
    std::vector<Section> sections_;
    std::vector<Segment> segments_;
    std::vector<std::size_t> alloc_index_;  // allocated sections sorted by vaddr
    std::map<Addr, std::string> import_slots_;
};

/// Free-function spellings of the image surface.
inline BinaryImage load_binary(const std::string& path) { return BinaryImage::load(path); }
inline std::vector<std::uint8_t> read_bytes(const BinaryImage& img, Addr vaddr, std::uint64_t len) {
    return img.read_bytes(vaddr, len);
}
inline std::vector<Symbol> symbols_if_present(const BinaryImage& img) { return img.symbols_if_present(); }

}  // namespace ehfetch
