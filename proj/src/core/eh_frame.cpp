#include "eh_frame.hpp"

#include "byte_reader.hpp"

#include <algorithm>
#include <map>

namespace ehfetch {

namespace {

constexpr std::uint8_t kOmit = 0xff;

struct DecodedPointer {
    std::optional<Addr> value;   // nullopt when the application cannot be resolved
    bool ok = false;             // false when the bytes ran out
};

// Reads the raw value of a pointer field; pc_range and augmentation lengths
// reuse this with the application ignored.
std::optional<std::uint64_t> read_encoded_value(ByteReader& r, ValueFormat fmt) {
    switch (fmt) {
    case ValueFormat::absptr:
    case ValueFormat::udata8: return r.read<std::uint64_t>();
    case ValueFormat::sdata8: {
        auto v = r.read<std::int64_t>();
        if (!v) return std::nullopt;
        return static_cast<std::uint64_t>(*v);
    }
    case ValueFormat::udata4: {
        auto v = r.read<std::uint32_t>();
        if (!v) return std::nullopt;
        return *v;
    }
    case ValueFormat::sdata4: {
        auto v = r.read<std::int32_t>();
        if (!v) return std::nullopt;
        return static_cast<std::uint64_t>(static_cast<std::int64_t>(*v));
    }
    case ValueFormat::udata2: {
        auto v = r.read<std::uint16_t>();
        if (!v) return std::nullopt;
        return *v;
    }
    case ValueFormat::sdata2: {
        auto v = r.read<std::int16_t>();
        if (!v) return std::nullopt;
        return static_cast<std::uint64_t>(static_cast<std::int64_t>(*v));
    }
    case ValueFormat::uleb128: return r.uleb128();
    case ValueFormat::sleb128: {
        auto v = r.sleb128();
        if (!v) return std::nullopt;
        return static_cast<std::uint64_t>(*v);
    }
    }
    return std::nullopt;
}

class Parser {
public:
    Parser(std::span<const std::uint8_t> bytes, Addr vaddr, const BinaryImage* img)
        : bytes_(bytes), vaddr_(vaddr), img_(img) {
        out_.section_vaddr = vaddr;
        out_.section_size = bytes.size();
    }

    EhFrame run() {
        ByteReader r(bytes_);
        while (!r.at_end()) {
            std::uint64_t start = r.pos();
            if (r.remaining() < 4) {
                diag(Severity::warn, start, "trailing bytes shorter than a length field");
                out_.layout.push_back({start, r.remaining(), EntryKind::skipped});
                break;
            }
            std::uint64_t length = *r.read<std::uint32_t>();
            bool extended = false;
            if (length == 0xffffffffu) {
                auto ext = r.read<std::uint64_t>();
                if (!ext) {
                    diag(Severity::warn, start, "truncated extended length");
                    out_.layout.push_back({start, bytes_.size() - start, EntryKind::skipped});
                    break;
                }
                length = *ext;
                extended = true;
            }
            std::uint64_t header = extended ? 12 : 4;
            if (length == 0) {
                out_.layout.push_back({start, header, EntryKind::terminator});
                continue;
            }
            std::uint64_t body = r.pos();
            if (length > r.remaining()) {
                diag(Severity::warn, start, "entry length runs past end of section");
                out_.layout.push_back({start, bytes_.size() - start, EntryKind::skipped});
                break;
            }
            std::uint64_t end = body + length;
            ByteReader entry(bytes_.first(end), body);
            std::uint64_t id_field = entry.pos();
            std::optional<std::uint64_t> id;
            if (extended) {
                id = entry.read<std::uint64_t>();
            } else if (auto id32 = entry.read<std::uint32_t>()) {
                id = *id32;
            }
            EntryKind kind = EntryKind::skipped;
            if (!id) {
                diag(Severity::warn, start, "entry too short for its id field");
            } else if (*id == 0) {
                kind = parse_cie(entry, start, end) ? EntryKind::cie : EntryKind::skipped;
            } else {
                kind = parse_fde(entry, start, end, id_field, *id) ? EntryKind::fde : EntryKind::skipped;
            }
            out_.layout.push_back({start, end - start, kind});
            r.seek(end);
        }
        check_overlaps();
        return std::move(out_);
    }

private:
    void diag(Severity sev, std::uint64_t offset, const std::string& msg) {
        out_.diagnostics.push_back({sev, "eh_frame", "entry at +" + hex(offset) + ": " + msg});
    }

    bool parse_cie(ByteReader& r, std::uint64_t start, std::uint64_t end) {
        Cie cie;
        cie.offset_in_section = start;
        auto version = r.read<std::uint8_t>();
        if (!version) return malformed_cie(start, "truncated version");
        cie.version = *version;
        if (cie.version != 1 && cie.version != 3 && cie.version != 4)
            return malformed_cie(start, "unsupported CIE version " + std::to_string(cie.version));
        while (true) {
            auto c = r.read<char>();
            if (!c) return malformed_cie(start, "unterminated augmentation string");
            if (*c == '\0') break;
            cie.augmentation.push_back(*c);
        }
        if (cie.version == 4) {
            auto addr_size = r.read<std::uint8_t>();
            auto seg_size = r.read<std::uint8_t>();
            if (!addr_size || !seg_size) return malformed_cie(start, "truncated address/segment size");
            if (*addr_size != 8 || *seg_size != 0)
                return malformed_cie(start, "unsupported address or segment size");
        }
        auto code_align = r.uleb128();
        auto data_align = r.sleb128();
        if (!code_align || !data_align) return malformed_cie(start, "truncated alignment factors");
        cie.code_align = *code_align;
        cie.data_align = *data_align;
        if (cie.version == 1) {
            auto ra = r.read<std::uint8_t>();
            if (!ra) return malformed_cie(start, "truncated return address column");
            cie.return_address_column = *ra;
        } else {
            auto ra = r.uleb128();
            if (!ra) return malformed_cie(start, "truncated return address column");
            cie.return_address_column = *ra;
        }
        // Default when no 'R' augmentation: absolute 8-byte pointers.
        cie.fde_pointer_encoding = *PointerEncoding::from_byte(0x00);

        const std::string& aug = cie.augmentation;
        if (!aug.empty()) {
            if (aug[0] != 'z')
                return unsupported_cie(cie, "augmentation \"" + aug + "\" without 'z' prefix");
            auto aug_len = r.uleb128();
            if (!aug_len || *aug_len > r.remaining()) return malformed_cie(start, "bad augmentation length");
            std::uint64_t aug_end = r.pos() + *aug_len;
            for (std::size_t i = 1; i < aug.size(); ++i) {
                char c = aug[i];
                if (c == 'L') {
                    auto b = r.read<std::uint8_t>();
                    if (!b) return malformed_cie(start, "truncated LSDA encoding");
                    auto enc = PointerEncoding::from_byte(*b);
                    if (!enc) return unsupported_cie(cie, "unknown LSDA encoding");
                    cie.lsda_encoding = *enc;
                } else if (c == 'P') {
                    auto b = r.read<std::uint8_t>();
                    if (!b) return malformed_cie(start, "truncated personality encoding");
                    auto enc = PointerEncoding::from_byte(*b);
                    if (!enc) return unsupported_cie(cie, "unknown personality encoding");
                    if (!enc->omitted && !read_encoded_value(r, enc->format))
                        return malformed_cie(start, "truncated personality pointer");
                } else if (c == 'R') {
                    auto b = r.read<std::uint8_t>();
                    if (!b) return malformed_cie(start, "truncated FDE pointer encoding");
                    auto enc = PointerEncoding::from_byte(*b);
                    if (!enc || enc->omitted) return unsupported_cie(cie, "unusable FDE pointer encoding");
                    cie.fde_pointer_encoding = *enc;
                } else if (c == 'S') {
                    cie.signal_frame = true;
                } else {
                    return unsupported_cie(cie, std::string("unknown augmentation letter '") + c + "'");
                }
            }
            if (r.pos() > aug_end) return malformed_cie(start, "augmentation data overruns its length");
            r.seek(aug_end);
        }
        auto rest = r.bytes(end - r.pos());
        cie.initial_cfi_bytes.assign(rest->begin(), rest->end());
        cie_index_[start] = out_.cies.size();
        out_.cies.push_back(std::move(cie));
        return true;
    }

    bool malformed_cie(std::uint64_t start, const std::string& why) {
        diag(Severity::warn, start, "malformed CIE: " + why);
        bad_cies_.insert(start);
        return false;
    }

    bool unsupported_cie(const Cie& cie, const std::string& why) {
        diag(Severity::warn, cie.offset_in_section, "CIE skipped: " + why);
        bad_cies_.insert(cie.offset_in_section);
        return false;
    }

    std::optional<Addr> resolve(const PointerEncoding& enc, std::uint64_t raw, std::uint64_t field_offset,
                                std::uint64_t entry_start, std::string& why) {
        Addr value = 0;
        switch (enc.application) {
        case Application::absolute: value = raw; break;
        case Application::pc_relative: value = vaddr_ + field_offset + raw; break;
        default:
            why = "pointer application needs a base that .eh_frame does not provide";
            return std::nullopt;
        }
        (void)entry_start;
        if (enc.indirect) {
            auto deref = img_ ? img_->read_u64(value) : std::nullopt;
            if (!deref) {
                why = "indirect pointer through unmapped address " + hex(value);
                return std::nullopt;
            }
            value = *deref;
        }
        return value;
    }

    bool parse_fde(ByteReader& r, std::uint64_t start, std::uint64_t end, std::uint64_t id_field,
                   std::uint64_t cie_pointer) {
        if (cie_pointer > id_field) {
            diag(Severity::warn, start, "CIE pointer points before the section");
            return false;
        }
        std::uint64_t cie_offset = id_field - cie_pointer;
        if (bad_cies_.count(cie_offset)) {
            diag(Severity::warn, start, "FDE skipped: owning CIE at +" + hex(cie_offset) + " is unusable");
            return false;
        }
        auto it = cie_index_.find(cie_offset);
        if (it == cie_index_.end()) {
            diag(Severity::warn, start, "FDE references no CIE at +" + hex(cie_offset));
            return false;
        }
        const Cie& cie = out_.cies[it->second];
        Fde fde;
        fde.offset_in_section = start;
        fde.cie_index = it->second;
        fde.cie_pointer_field = id_field;
        fde.cie_pointer = cie_pointer;

        std::uint64_t begin_field = r.pos();
        auto raw_begin = read_encoded_value(r, cie.fde_pointer_encoding.format);
        auto raw_range = read_encoded_value(r, cie.fde_pointer_encoding.format);
        if (!raw_begin || !raw_range) {
            diag(Severity::warn, start, "truncated PC Begin / PC Range");
            return false;
        }
        std::string why;
        auto begin = resolve(cie.fde_pointer_encoding, *raw_begin, begin_field, start, why);
        if (!begin) {
            diag(Severity::warn, start, "FDE skipped: " + why);
            return false;
        }
        fde.pc_begin = *begin;
        fde.pc_range = *raw_range;
        if (!cie.augmentation.empty()) {
            auto aug_len = r.uleb128();
            if (!aug_len || *aug_len > r.remaining()) {
                diag(Severity::warn, start, "bad FDE augmentation length");
                return false;
            }
            std::uint64_t aug_end = r.pos() + *aug_len;
            if (cie.lsda_encoding && !cie.lsda_encoding->omitted) {
                std::uint64_t field = r.pos();
                auto raw_lsda = read_encoded_value(r, cie.lsda_encoding->format);
                if (raw_lsda && *raw_lsda != 0) {
                    std::string lsda_why;
                    fde.lsda = resolve(*cie.lsda_encoding, *raw_lsda, field, start, lsda_why);
                }
            }
            r.seek(aug_end);
        }
        if (fde.pc_range == 0) {
            diag(Severity::warn, start, "FDE skipped: zero PC Range at " + hex(fde.pc_begin));
            return false;
        }
        if (img_ && !img_->is_executable(fde.pc_begin))
            diag(Severity::warn, start, "PC Begin " + hex(fde.pc_begin) + " is outside executable sections");
        auto rest = r.bytes(end - r.pos());
        fde.cfi_bytes.assign(rest->begin(), rest->end());
        out_.fdes.push_back(std::move(fde));
        return true;
    }

    void check_overlaps() {
        std::vector<const Fde*> sorted;
        for (const auto& f : out_.fdes) sorted.push_back(&f);
        std::sort(sorted.begin(), sorted.end(), [](const Fde* a, const Fde* b) {
            return std::tie(a->pc_begin, a->offset_in_section) < std::tie(b->pc_begin, b->offset_in_section);
        });
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            const Fde* prev = sorted[i - 1];
            const Fde* cur = sorted[i];
            if (cur->pc_begin < prev->pc_begin + prev->pc_range)
                out_.diagnostics.push_back({Severity::info, "eh_frame",
                                            "FDE ranges overlap at " + hex(cur->pc_begin) + " (FDEs at +" +
                                                hex(prev->offset_in_section) + " and +" +
                                                hex(cur->offset_in_section) + ")"});
        }
    }

    std::span<const std::uint8_t> bytes_;
    Addr vaddr_;
    const BinaryImage* img_;
    EhFrame out_;
    std::map<std::uint64_t, std::size_t> cie_index_;
    std::set<std::uint64_t> bad_cies_;
};

std::optional<EhFrameHdr> parse_hdr(const BinaryImage& img, const Section& sec, Diagnostics& diags) {
    auto bytes = img.section_bytes(sec);
    ByteReader r(bytes);
    auto version = r.read<std::uint8_t>();
    auto ptr_enc_b = r.read<std::uint8_t>();
    auto count_enc_b = r.read<std::uint8_t>();
    auto table_enc_b = r.read<std::uint8_t>();
    auto fail = [&](const std::string& why) -> std::optional<EhFrameHdr> {
        diags.push_back({Severity::warn, "eh_frame_hdr", why});
        return std::nullopt;
    };
    if (!table_enc_b) return fail("truncated header");
    if (*version != 1) return fail("unsupported .eh_frame_hdr version " + std::to_string(*version));
    auto ptr_enc = PointerEncoding::from_byte(*ptr_enc_b);
    auto count_enc = PointerEncoding::from_byte(*count_enc_b);
    auto table_enc = PointerEncoding::from_byte(*table_enc_b);
    if (!ptr_enc || !count_enc || !table_enc) return fail("unknown pointer encoding");
    EhFrameHdr hdr;
    hdr.version = *version;
    if (!ptr_enc->omitted && !read_encoded_value(r, ptr_enc->format)) return fail("truncated eh_frame_ptr");
    if (count_enc->omitted || table_enc->omitted) return hdr;
    auto count = read_encoded_value(r, count_enc->format);
    if (!count) return fail("truncated fde_count");
    hdr.fde_count = *count;
    auto apply = [&](std::uint64_t raw, std::uint64_t field) -> std::optional<Addr> {
        switch (table_enc->application) {
        case Application::absolute: return raw;
        case Application::pc_relative: return sec.vaddr + field + raw;
        case Application::datarel: return sec.vaddr + raw;   // data base is the header start
        default: return std::nullopt;
        }
    };
    for (std::uint64_t i = 0; i < hdr.fde_count; ++i) {
        std::uint64_t f1 = r.pos();
        auto loc = read_encoded_value(r, table_enc->format);
        std::uint64_t f2 = r.pos();
        auto fde = read_encoded_value(r, table_enc->format);
        if (!loc || !fde) return fail("search table shorter than fde_count");
        auto a = apply(*loc, f1);
        auto b = apply(*fde, f2);
        if (!a || !b) return fail("unsupported search table encoding");
        hdr.table.emplace_back(*a, *b);
    }
    return hdr;
}

void cross_check(const EhFrame& eh, const EhFrameHdr& hdr, Diagnostics& diags) {
    std::map<Addr, Addr> parsed;
    for (const auto& f : eh.fdes) parsed.emplace(f.pc_begin, eh.section_vaddr + f.offset_in_section);
    std::size_t mismatches = 0;
    for (const auto& [loc, fde_addr] : hdr.table) {
        auto it = parsed.find(loc);
        if (it == parsed.end() || it->second != fde_addr) {
            if (mismatches++ < 8)
                diags.push_back({Severity::warn, "eh_frame_hdr",
                                 "search table entry " + hex(loc) + " -> " + hex(fde_addr) +
                                     " has no matching parsed FDE"});
        }
    }
    if (hdr.table.size() != eh.fdes.size())
        diags.push_back({Severity::warn, "eh_frame_hdr",
                         "search table lists " + std::to_string(hdr.table.size()) + " FDEs, parsed " +
                             std::to_string(eh.fdes.size())});
}

}  // namespace

std::optional<PointerEncoding> PointerEncoding::from_byte(std::uint8_t byte) {
    PointerEncoding enc;
    enc.raw = byte;
    if (byte == kOmit) {
        enc.omitted = true;
        return enc;
    }
    switch (byte & 0x0f) {
    case 0x00: enc.format = ValueFormat::absptr; break;
    case 0x01: enc.format = ValueFormat::uleb128; break;
    case 0x02: enc.format = ValueFormat::udata2; break;
    case 0x03: enc.format = ValueFormat::udata4; break;
    case 0x04: enc.format = ValueFormat::udata8; break;
    case 0x09: enc.format = ValueFormat::sleb128; break;
    case 0x0a: enc.format = ValueFormat::sdata2; break;
    case 0x0b: enc.format = ValueFormat::sdata4; break;
    case 0x0c: enc.format = ValueFormat::sdata8; break;
    default: return std::nullopt;
    }
    switch (byte & 0x70) {
    case 0x00: enc.application = Application::absolute; break;
    case 0x10: enc.application = Application::pc_relative; break;
    case 0x20: enc.application = Application::textrel; break;
    case 0x30: enc.application = Application::datarel; break;
    case 0x40: enc.application = Application::funcrel; break;
    case 0x50: enc.application = Application::aligned; break;
    default: return std::nullopt;
    }
    enc.indirect = byte & 0x80;
    return enc;
}

EhFrame parse_eh_frame_bytes(std::span<const std::uint8_t> bytes, Addr section_vaddr, const BinaryImage* img) {
    return Parser(bytes, section_vaddr, img).run();
}

EhFrame parse_eh_frame(const BinaryImage& img) {
    const Section* sec = img.section_by_name(".eh_frame");
    if (!sec || sec->kind == SectionKind::nobits)
        throw Error(ErrorCode::missing_eh_frame, img.path() + ": no .eh_frame section");
    EhFrame eh = parse_eh_frame_bytes(img.section_bytes(*sec), sec->vaddr, &img);
    if (const Section* hs = img.section_by_name(".eh_frame_hdr")) {
        eh.hdr = parse_hdr(img, *hs, eh.diagnostics);
        if (eh.hdr) cross_check(eh, *eh.hdr, eh.diagnostics);
    }
    return eh;
}

std::set<Addr> fde_starts(std::span<const Fde> fdes) {
    std::set<Addr> out;
    for (const auto& f : fdes) out.insert(f.pc_begin);
    return out;
}

}  // namespace ehfetch
