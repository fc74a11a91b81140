#pragma once

#include "common.hpp"
#include "elf_image.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ehfetch {

enum class ValueFormat { absptr, uleb128, udata2, udata4, udata8, sleb128, sdata2, sdata4, sdata8 };
enum class Application { absolute, pc_relative, textrel, datarel, funcrel, aligned };

/// A DW_EH_PE_* pointer encoding byte, split into its parts.
struct PointerEncoding {
    ValueFormat format = ValueFormat::absptr;
    Application application = Application::absolute;
    bool indirect = false;
    bool omitted = false;   // 0xff
    std::uint8_t raw = 0;

    static std::optional<PointerEncoding> from_byte(std::uint8_t byte);
};

struct Cie {
    std::uint64_t offset_in_section = 0;
    std::uint8_t version = 0;
    std::string augmentation;
    std::uint64_t code_align = 1;
    std::int64_t data_align = 1;
    std::uint64_t return_address_column = 16;
    PointerEncoding fde_pointer_encoding;
    std::optional<PointerEncoding> lsda_encoding;
    bool signal_frame = false;
    std::vector<std::uint8_t> initial_cfi_bytes;
};

struct Fde {
    std::uint64_t offset_in_section = 0;
    std::size_t cie_index = 0;              // into EhFrame::cies
    std::uint64_t cie_pointer_field = 0;    // section offset of the CIE pointer field
    std::uint64_t cie_pointer = 0;          // raw value of that field
    Addr pc_begin = 0;
    std::uint64_t pc_range = 0;
    std::vector<std::uint8_t> cfi_bytes;
    std::optional<Addr> lsda;

    AddrRange range() const { return {pc_begin, pc_begin + pc_range}; }
};

enum class EntryKind { cie, fde, terminator, skipped };

/// Where one entry sits in the section; total_length includes the length field.
struct EntrySpan {
    std::uint64_t offset = 0;
    std::uint64_t total_length = 0;
    EntryKind kind = EntryKind::skipped;
};

struct EhFrameHdr {
    std::uint8_t version = 0;
    std::uint64_t fde_count = 0;
    std::vector<std::pair<Addr, Addr>> table;   // (initial location, FDE address)
};

struct EhFrame {
    Addr section_vaddr = 0;
    std::uint64_t section_size = 0;
    std::vector<Cie> cies;
    std::vector<Fde> fdes;
    std::vector<EntrySpan> layout;
    std::optional<EhFrameHdr> hdr;
    Diagnostics diagnostics;

    const Cie& cie_of(const Fde& fde) const { return cies.at(fde.cie_index); }
};

/// Decodes .eh_frame. Throws Error(missing_eh_frame) when the section is
/// absent; malformed entries become diagnostics and parsing carries on.
EhFrame parse_eh_frame(const BinaryImage& img);

/// Same decoding over raw section bytes placed at section_vaddr. The image,
/// when given, resolves indirect pointers and executable-range checks.
EhFrame parse_eh_frame_bytes(std::span<const std::uint8_t> bytes, Addr section_vaddr,
                             const BinaryImage* img = nullptr);

/// Sorted, deduplicated PC Begin values.
std::set<Addr> fde_starts(std::span<const Fde> fdes);

}  // namespace ehfetch
