#include "elf_image.hpp"

#include <elf.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace ehfetch {

namespace {

template <typename T>
T read_struct(std::span<const std::uint8_t> raw, std::uint64_t offset) {
    if (offset > raw.size() || raw.size() - offset < sizeof(T))
        throw Error(ErrorCode::truncated, "structure at offset " + hex(offset) + " extends past end of file");
    T value;
    std::memcpy(&value, raw.data() + offset, sizeof(T));
    return value;
}

std::string read_cstr(std::span<const std::uint8_t> raw, std::uint64_t offset) {
    if (offset >= raw.size()) return {};
    auto begin = raw.begin() + static_cast<std::ptrdiff_t>(offset);
    auto end = std::find(begin, raw.end(), std::uint8_t{0});
    return std::string(begin, end);
}

}  // namespace

BinaryImage BinaryImage::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path);
    std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_bytes(std::move(raw), path);
}

BinaryImage BinaryImage::from_bytes(std::vector<std::uint8_t> raw, std::string path) {
    BinaryImage img;
    img.path_ = std::move(path);
    img.raw_ = std::move(raw);
    img.parse();
    img.parse_imports();
    return img;
}

BinaryImage BinaryImage::synthetic(std::vector<SyntheticSection> sections, Addr entry) {
    BinaryImage img;
    img.path_ = "<synthetic>";
    for (auto& s : sections) {
        Section sec;
        sec.name = s.name;
        sec.vaddr = s.vaddr;
        sec.allocated = true;
        sec.executable = s.executable;
        sec.writable = s.writable;
        if (s.nobits_size != 0) {
            sec.kind = SectionKind::nobits;
            sec.type = SHT_NOBITS;
            sec.size = s.nobits_size;
            sec.file_offset = img.raw_.size();
        } else {
            sec.kind = SectionKind::progbits;
            sec.type = SHT_PROGBITS;
            sec.size = s.bytes.size();
            sec.file_offset = img.raw_.size();
            img.raw_.insert(img.raw_.end(), s.bytes.begin(), s.bytes.end());
        }
        Segment seg;
        seg.vaddr = sec.vaddr;
        seg.memsz = sec.size;
        seg.filesz = sec.kind == SectionKind::nobits ? 0 : sec.size;
        seg.readable = true;
        seg.writable = sec.writable;
        seg.executable = sec.executable;
        img.segments_.push_back(seg);
        img.sections_.push_back(std::move(sec));
    }
    img.entry_ = entry;
    for (std::size_t i = 0; i < img.sections_.size(); ++i)
        if (img.sections_[i].size != 0) img.alloc_index_.push_back(i);
    std::sort(img.alloc_index_.begin(), img.alloc_index_.end(), [&](std::size_t a, std::size_t b) {
        return img.sections_[a].vaddr < img.sections_[b].vaddr;
    });
    return img;
}

void BinaryImage::parse() {
    std::span<const std::uint8_t> raw = raw_;
    if (raw.size() < SELFMAG || std::memcmp(raw.data(), ELFMAG, SELFMAG) != 0)
        throw Error(ErrorCode::not_elf, path_ + ": bad ELF magic");
    if (raw.size() < EI_NIDENT) throw Error(ErrorCode::truncated, path_ + ": truncated ELF identification");
    if (raw[EI_CLASS] != ELFCLASS64) throw Error(ErrorCode::unsupported_arch, path_ + ": not a 64-bit ELF");
    if (raw[EI_DATA] != ELFDATA2LSB) throw Error(ErrorCode::unsupported_arch, path_ + ": not little-endian");

    auto ehdr = read_struct<Elf64_Ehdr>(raw, 0);
    if (ehdr.e_machine != EM_X86_64) throw Error(ErrorCode::unsupported_arch, path_ + ": machine is not x86-64");
    entry_ = ehdr.e_entry;
    is_pie_ = ehdr.e_type == ET_DYN;

    for (unsigned i = 0; i < ehdr.e_phnum; ++i) {
        auto ph = read_struct<Elf64_Phdr>(raw, ehdr.e_phoff + std::uint64_t{i} * ehdr.e_phentsize);
        if (ph.p_type != PT_LOAD) continue;
        Segment seg;
        seg.vaddr = ph.p_vaddr;
        seg.memsz = ph.p_memsz;
        seg.filesz = std::min(ph.p_filesz, ph.p_memsz);
        seg.readable = ph.p_flags & PF_R;
        seg.writable = ph.p_flags & PF_W;
        seg.executable = ph.p_flags & PF_X;
        segments_.push_back(seg);
    }

    if (ehdr.e_shnum == 0) return;
    std::vector<Elf64_Shdr> shdrs;
    shdrs.reserve(ehdr.e_shnum);
    for (unsigned i = 0; i < ehdr.e_shnum; ++i)
        shdrs.push_back(read_struct<Elf64_Shdr>(raw, ehdr.e_shoff + std::uint64_t{i} * ehdr.e_shentsize));

    std::uint64_t strtab_off = 0;
    if (ehdr.e_shstrndx < shdrs.size()) strtab_off = shdrs[ehdr.e_shstrndx].sh_offset;

    for (const auto& sh : shdrs) {
        Section sec;
        sec.name = read_cstr(raw, strtab_off + sh.sh_name);
        sec.vaddr = sh.sh_addr;
        sec.size = sh.sh_size;
        sec.file_offset = sh.sh_offset;
        sec.allocated = sh.sh_flags & SHF_ALLOC;
        sec.writable = sh.sh_flags & SHF_WRITE;
        sec.executable = (sh.sh_flags & SHF_EXECINSTR) && sec.allocated;
        sec.type = sh.sh_type;
        sec.entsize = sh.sh_entsize;
        sec.link = sh.sh_link;
        switch (sh.sh_type) {
        case SHT_NOBITS: sec.kind = SectionKind::nobits; break;
        case SHT_SYMTAB:
        case SHT_DYNSYM: sec.kind = SectionKind::symtab; break;
        case SHT_NULL: sec.kind = SectionKind::other; break;
        default: sec.kind = sh.sh_type == SHT_PROGBITS ? SectionKind::progbits : SectionKind::other; break;
        }
        if (sec.kind != SectionKind::nobits && sh.sh_type != SHT_NULL) {
            if (sh.sh_offset > raw.size() || raw.size() - sh.sh_offset < sh.sh_size)
                throw Error(ErrorCode::truncated, path_ + ": section " + sec.name + " extends past end of file");
        }
        // TLS templates do not occupy their own address space.
        if ((sh.sh_flags & SHF_TLS) && sh.sh_type == SHT_NOBITS) sec.allocated = false;
        sections_.push_back(std::move(sec));
    }

    for (std::size_t i = 0; i < sections_.size(); ++i)
        if (sections_[i].allocated && sections_[i].size != 0) alloc_index_.push_back(i);
    std::stable_sort(alloc_index_.begin(), alloc_index_.end(),
                     [&](std::size_t a, std::size_t b) { return sections_[a].vaddr < sections_[b].vaddr; });
}

void BinaryImage::parse_imports() {
    for (const auto& rel : sections_) {
        if (rel.type != SHT_RELA || rel.entsize != sizeof(Elf64_Rela)) continue;
        // sh_link of a dynamic relocation section names its symbol table,
        // whose own sh_link names the string table.
        if (rel.link == 0 || rel.link >= sections_.size()) continue;
        const Section* dynsym = &sections_[rel.link];
        if (dynsym->type != SHT_DYNSYM || dynsym->link >= sections_.size()) continue;
        const Section* dynstr = &sections_[dynsym->link];
        auto rel_bytes = section_bytes(rel);
        auto sym_bytes = section_bytes(*dynsym);
        for (std::size_t off = 0; off + sizeof(Elf64_Rela) <= rel_bytes.size(); off += sizeof(Elf64_Rela)) {
            auto r = read_struct<Elf64_Rela>(rel_bytes, off);
            auto type = ELF64_R_TYPE(r.r_info);
            if (type != R_X86_64_JUMP_SLOT && type != R_X86_64_GLOB_DAT) continue;
            std::uint64_t sym_off = ELF64_R_SYM(r.r_info) * sizeof(Elf64_Sym);
            if (sym_off + sizeof(Elf64_Sym) > sym_bytes.size()) continue;
            auto sym = read_struct<Elf64_Sym>(sym_bytes, sym_off);
            auto name = read_cstr(raw_, dynstr->file_offset + sym.st_name);
            if (!name.empty()) import_slots_.emplace(r.r_offset, std::move(name));
        }
    }
}

const Section* BinaryImage::section_by_name(std::string_view name) const {
    for (const auto& s : sections_)
        if (s.name == name) return &s;
    return nullptr;
}

const Section* BinaryImage::section_at(Addr vaddr) const {
    auto it = std::upper_bound(alloc_index_.begin(), alloc_index_.end(), vaddr,
                               [&](Addr a, std::size_t idx) { return a < sections_[idx].vaddr; });
    // Sections are sorted by start; a few steps back covers the rare overlaps.
    for (int steps = 0; it != alloc_index_.begin() && steps < 4; ++steps) {
        --it;
        const Section& s = sections_[*it];
        if (s.range().contains(vaddr)) return &s;
    }
    return nullptr;
}

bool BinaryImage::is_executable(Addr vaddr) const {
    const Section* s = section_at(vaddr);
    return s && s->executable;
}

std::vector<std::uint8_t> BinaryImage::read_bytes(Addr vaddr, std::uint64_t len) const {
    const Section* s = section_at(vaddr);
    if (!s) throw Error(ErrorCode::out_of_range, "address " + hex(vaddr) + " is not mapped");
    if (len > s->vaddr + s->size - vaddr)
        throw Error(ErrorCode::out_of_range,
                    "range " + hex(vaddr) + "+" + std::to_string(len) + " crosses the end of " + s->name);
    if (s->kind == SectionKind::nobits) return std::vector<std::uint8_t>(len, 0);
    auto begin = raw_.begin() + static_cast<std::ptrdiff_t>(s->file_offset + (vaddr - s->vaddr));
    return std::vector<std::uint8_t>(begin, begin + static_cast<std::ptrdiff_t>(len));
}

std::span<const std::uint8_t> BinaryImage::view(Addr vaddr, std::uint64_t max_len) const {
    const Section* s = section_at(vaddr);
    if (!s || s->kind == SectionKind::nobits) return {};
    std::uint64_t avail = s->vaddr + s->size - vaddr;
    return std::span<const std::uint8_t>(raw_).subspan(s->file_offset + (vaddr - s->vaddr),
                                                      std::min(avail, max_len));
}

std::span<const std::uint8_t> BinaryImage::section_bytes(const Section& s) const {
    if (s.kind == SectionKind::nobits || s.type == SHT_NULL) return {};
    return std::span<const std::uint8_t>(raw_).subspan(s.file_offset, s.size);
}

std::optional<std::uint64_t> BinaryImage::read_u64(Addr vaddr) const {
    auto v = view(vaddr, 8);
    if (v.size() < 8) {
        const Section* s = section_at(vaddr);
        if (s && s->kind == SectionKind::nobits && s->vaddr + s->size - vaddr >= 8) return 0;
        return std::nullopt;
    }
    std::uint64_t out;
    std::memcpy(&out, v.data(), 8);
    return out;
}

std::vector<Symbol> BinaryImage::read_symbols(const Section& symtab, bool dynamic) const {
    std::vector<Symbol> out;
    if (symtab.entsize != sizeof(Elf64_Sym)) return out;
    if (symtab.link >= sections_.size()) return out;
    const Section& strtab = sections_[symtab.link];
    auto bytes = section_bytes(symtab);
    for (std::size_t off = sizeof(Elf64_Sym); off + sizeof(Elf64_Sym) <= bytes.size(); off += sizeof(Elf64_Sym)) {
        auto sym = read_struct<Elf64_Sym>(bytes, off);
        auto type = ELF64_ST_TYPE(sym.st_info);
        if (type != STT_FUNC && type != STT_GNU_IFUNC) continue;
        if (sym.st_shndx == SHN_UNDEF || sym.st_value == 0) continue;
        Symbol s;
        s.vaddr = sym.st_value;
        s.size = sym.st_size;
        s.name = read_cstr(raw_, strtab.file_offset + sym.st_name);
        s.dynamic = dynamic;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Symbol> BinaryImage::symbols_if_present() const {
    std::vector<Symbol> out;
    if (path_ == "<synthetic>") return out;
    for (const auto& s : sections_) {
        if (s.type == SHT_SYMTAB) {
            auto syms = read_symbols(s, false);
            out.insert(out.end(), syms.begin(), syms.end());
        }
    }
    for (const auto& s : sections_) {
        if (s.type == SHT_DYNSYM) {
            auto syms = read_symbols(s, true);
            out.insert(out.end(), syms.begin(), syms.end());
        }
    }
    std::sort(out.begin(), out.end(), [](const Symbol& a, const Symbol& b) {
        return std::tie(a.vaddr, a.name, a.dynamic) < std::tie(b.vaddr, b.name, b.dynamic);
    });
    return out;
}

}  // namespace ehfetch
