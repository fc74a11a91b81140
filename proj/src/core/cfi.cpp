#include "cfi.hpp"

#include "byte_reader.hpp"

#include <algorithm>

namespace ehfetch {

namespace {

constexpr std::uint64_t kRsp = 7;

[[noreturn]] void decode_error(std::size_t offset, const std::string& what) {
    throw Error(ErrorCode::cfi_decode, "CFI decode error at byte " + std::to_string(offset) + ": " + what);
}

std::size_t pointer_size(ValueFormat f) {
    switch (f) {
    case ValueFormat::udata2:
    case ValueFormat::sdata2: return 2;
    case ValueFormat::udata4:
    case ValueFormat::sdata4: return 4;
    default: return 8;
    }
}

}  // namespace

std::vector<CfiInstruction> decode_cfi_block(std::span<const std::uint8_t> bytes, const Cie& cie, bool from_cie) {
    std::vector<CfiInstruction> out;
    ByteReader r(bytes);
    const auto code_align = static_cast<std::int64_t>(cie.code_align);
    const std::int64_t data_align = cie.data_align;

    while (!r.at_end()) {
        const std::size_t at = r.pos();
        auto need_u = [&]() {
            auto v = r.uleb128();
            if (!v) decode_error(at, "truncated ULEB128 operand");
            return *v;
        };
        auto need_s = [&]() {
            auto v = r.sleb128();
            if (!v) decode_error(at, "truncated SLEB128 operand");
            return *v;
        };
        auto need_block = [&]() {
            auto len = need_u();
            auto b = r.bytes(len);
            if (!b) decode_error(at, "expression block runs past end");
            return std::vector<std::uint8_t>(b->begin(), b->end());
        };

        CfiInstruction ins;
        ins.from_cie = from_cie;
        const std::uint8_t byte = *r.read<std::uint8_t>();
        ins.opcode = byte;
        const std::uint8_t high = byte & 0xc0;
        const std::uint8_t low = byte & 0x3f;

        if (high == 0x40) {
            ins.op = CfiOp::advance_loc;
            ins.value = low * code_align;
        } else if (high == 0x80) {
            ins.op = CfiOp::offset;
            ins.reg = low;
            ins.value = static_cast<std::int64_t>(need_u()) * data_align;
        } else if (high == 0xc0) {
            ins.op = CfiOp::restore;
            ins.reg = low;
        } else {
            switch (byte) {
            case 0x00: ins.op = CfiOp::nop; break;
            case 0x01: {
                ins.op = CfiOp::set_loc;
                auto b = r.bytes(pointer_size(cie.fde_pointer_encoding.format));
                if (!b) decode_error(at, "truncated set_loc address");
                std::uint64_t v = 0;
                for (std::size_t i = b->size(); i-- > 0;) v = (v << 8) | (*b)[i];
                ins.value = static_cast<std::int64_t>(v);
                break;
            }
            case 0x02:
            case 0x03:
            case 0x04: {
                ins.op = CfiOp::advance_loc;
                std::optional<std::uint64_t> d;
                if (byte == 0x02) {
                    if (auto v = r.read<std::uint8_t>()) d = *v;
                } else if (byte == 0x03) {
                    if (auto v = r.read<std::uint16_t>()) d = *v;
                } else if (auto v = r.read<std::uint32_t>()) {
                    d = *v;
                }
                if (!d) decode_error(at, "truncated advance_loc delta");
                ins.value = static_cast<std::int64_t>(*d) * code_align;
                break;
            }
            case 0x05:
                ins.op = CfiOp::offset;
                ins.reg = need_u();
                ins.value = static_cast<std::int64_t>(need_u()) * data_align;
                break;
            case 0x06:
                ins.op = CfiOp::restore;
                ins.reg = need_u();
                break;
            case 0x07:
                ins.op = CfiOp::undefined;
                ins.reg = need_u();
                break;
            case 0x08:
                ins.op = CfiOp::same_value;
                ins.reg = need_u();
                break;
            case 0x09:
                ins.op = CfiOp::register_rule;
                ins.reg = need_u();
                ins.value = static_cast<std::int64_t>(need_u());
                break;
            case 0x0a: ins.op = CfiOp::remember_state; break;
            case 0x0b: ins.op = CfiOp::restore_state; break;
            case 0x0c:
                ins.op = CfiOp::def_cfa;
                ins.reg = need_u();
                ins.value = static_cast<std::int64_t>(need_u());
                break;
            case 0x0d:
                ins.op = CfiOp::def_cfa_register;
                ins.reg = need_u();
                break;
            case 0x0e:
                ins.op = CfiOp::def_cfa_offset;
                ins.value = static_cast<std::int64_t>(need_u());
                break;
            case 0x0f:
                ins.op = CfiOp::def_cfa_expression;
                ins.block = need_block();
                break;
            case 0x10:
                ins.op = CfiOp::expression;
                ins.reg = need_u();
                ins.block = need_block();
                break;
            case 0x11:
                ins.op = CfiOp::offset;
                ins.reg = need_u();
                ins.value = need_s() * data_align;
                break;
            case 0x12:
                ins.op = CfiOp::def_cfa_sf;
                ins.reg = need_u();
                ins.value = need_s() * data_align;
                break;
            case 0x13:
                ins.op = CfiOp::def_cfa_offset_sf;
                ins.value = need_s() * data_align;
                break;
            case 0x14:
                ins.op = CfiOp::val_offset;
                ins.reg = need_u();
                ins.value = static_cast<std::int64_t>(need_u()) * data_align;
                break;
            case 0x15:
                ins.op = CfiOp::val_offset;
                ins.reg = need_u();
                ins.value = need_s() * data_align;
                break;
            case 0x16:
                ins.op = CfiOp::val_expression;
                ins.reg = need_u();
                ins.block = need_block();
                break;
            case 0x2d:   // GNU_window_save, SPARC only but operand-free
                ins.op = CfiOp::other;
                break;
            case 0x2e:
                ins.op = CfiOp::gnu_args_size;
                ins.value = static_cast<std::int64_t>(need_u());
                break;
            case 0x2f:
                ins.op = CfiOp::offset;
                ins.reg = need_u();
                ins.value = -static_cast<std::int64_t>(need_u()) * data_align;
                break;
            default: decode_error(at, "unknown opcode " + hex(byte));
            }
        }
        out.push_back(std::move(ins));
    }
    return out;
}

std::vector<CfiInstruction> decode_cfi(const Cie& cie, const Fde& fde) {
    auto out = decode_cfi_block(cie.initial_cfi_bytes, cie, true);
    auto own = decode_cfi_block(fde.cfi_bytes, cie, false);
    out.insert(out.end(), std::make_move_iterator(own.begin()), std::make_move_iterator(own.end()));
    return out;
}

StackHeightTable stack_heights(const Cie& cie, const Fde& fde) {
    StackHeightTable t;
    t.function_start = fde.pc_begin;
    t.range = fde.pc_range;

    struct Rule {
        std::uint64_t reg = kRsp;
        std::int64_t offset = 8;
        bool defined = false;
        bool by_expression = false;
    };
    Rule rule;
    Rule cie_rule;
    bool cie_done = false;
    std::vector<Rule> saved;
    Addr cursor = fde.pc_begin;

    auto fail = [&](const std::string& why) {
        if (t.complete) {
            t.complete = false;
            t.incompleteness_reason = why;
        }
    };
    auto record = [&]() {
        if (!rule.defined || rule.by_expression || rule.reg != kRsp) return;
        if (rule.offset < 8) {
            fail("cfa offset below 8 at " + hex(cursor));
            return;
        }
        std::int64_t h = rule.offset - 8;
        if (!t.entries.empty() && t.entries.back().addr == cursor) {
            t.entries.back().height = h;
        } else {
            t.entries.push_back({cursor, h});
        }
    };

    const auto program = decode_cfi(cie, fde);
    for (const auto& ins : program) {
        if (!ins.from_cie && !cie_done) {
            cie_done = true;
            cie_rule = rule;
            if (!rule.defined || rule.by_expression || rule.reg != kRsp || rule.offset != 8)
                fail("initial CFA rule is not rsp+8");
            record();
        }
        switch (ins.op) {
        case CfiOp::advance_loc:
            cursor += static_cast<Addr>(ins.value);
            break;
        case CfiOp::set_loc: {
            Addr next = static_cast<Addr>(ins.value);
            if (next < cursor) fail("set_loc moves backwards");
            else cursor = next;
            break;
        }
        case CfiOp::def_cfa:
        case CfiOp::def_cfa_sf:
            rule.reg = ins.reg;
            rule.offset = ins.value;
            rule.defined = true;
            rule.by_expression = false;
            if (ins.op == CfiOp::def_cfa_sf) fail("cfa defined by def_cfa_sf");
            if (rule.reg != kRsp) fail("cfa register not rsp");
            record();
            break;
        case CfiOp::def_cfa_register:
            rule.reg = ins.reg;
            if (rule.reg != kRsp) fail("cfa register not rsp");
            record();
            break;
        case CfiOp::def_cfa_offset:
        case CfiOp::def_cfa_offset_sf:
            rule.offset = ins.value;
            rule.defined = true;
            if (ins.op == CfiOp::def_cfa_offset_sf) fail("cfa defined by def_cfa_offset_sf");
            if (rule.reg != kRsp) fail("cfa register not rsp");
            record();
            break;
        case CfiOp::def_cfa_expression:
            rule.by_expression = true;
            fail("cfa defined by an expression");
            break;
        case CfiOp::remember_state:
            saved.push_back(rule);
            break;
        case CfiOp::restore_state:
            if (saved.empty()) {
                fail("restore_state without remember_state");
                break;
            }
            rule = saved.back();
            saved.pop_back();
            record();
            break;
        default: break;
        }
    }
    if (!cie_done) {
        // FDE with no instructions of its own.
        if (!rule.defined || rule.by_expression || rule.reg != kRsp || rule.offset != 8)
            fail("initial CFA rule is not rsp+8");
        record();
    }
    if (!saved.empty()) fail("unbalanced remember_state");
    if (t.complete && (t.entries.empty() || t.entries.front().addr != fde.pc_begin))
        fail("no CFA rule at function start");
    for (std::size_t i = 1; t.complete && i < t.entries.size(); ++i)
        if (t.entries[i].addr <= t.entries[i - 1].addr) fail("advance_loc cursor not increasing");
    if (t.complete && !t.entries.empty() && t.entries.back().addr >= fde.pc_begin + fde.pc_range &&
        t.entries.size() > 1) {
        // A rule that only takes effect at the end address changes nothing inside the FDE.
        while (t.entries.size() > 1 && t.entries.back().addr >= fde.pc_begin + fde.pc_range)
            t.entries.pop_back();
    }
    return t;
}

std::optional<std::int64_t> height_at(const StackHeightTable& table, Addr addr) {
    if (addr < table.function_start || addr >= table.function_start + table.range)
        throw Error(ErrorCode::address_out_of_fde,
                    hex(addr) + " is outside the FDE starting at " + hex(table.function_start));
    if (!table.complete) return std::nullopt;
    auto it = std::upper_bound(table.entries.begin(), table.entries.end(), addr,
                               [](Addr a, const HeightEntry& e) { return a < e.addr; });
    if (it == table.entries.begin()) return std::nullopt;
    return std::prev(it)->height;
}

std::string describe(const CfiInstruction& ins) {
    auto num = [](std::int64_t v) { return std::to_string(v); };
    auto r = "r" + std::to_string(ins.reg);
    switch (ins.op) {
    case CfiOp::nop: return "DW_CFA_nop";
    case CfiOp::set_loc: return "DW_CFA_set_loc: " + hex(static_cast<Addr>(ins.value));
    case CfiOp::advance_loc: return "DW_CFA_advance_loc: " + num(ins.value);
    case CfiOp::def_cfa: return "DW_CFA_def_cfa: " + r + " ofs " + num(ins.value);
    case CfiOp::def_cfa_sf: return "DW_CFA_def_cfa_sf: " + r + " ofs " + num(ins.value);
    case CfiOp::def_cfa_register: return "DW_CFA_def_cfa_register: " + r;
    case CfiOp::def_cfa_offset: return "DW_CFA_def_cfa_offset: " + num(ins.value);
    case CfiOp::def_cfa_offset_sf: return "DW_CFA_def_cfa_offset_sf: " + num(ins.value);
    case CfiOp::def_cfa_expression: return "DW_CFA_def_cfa_expression";
    case CfiOp::offset: return "DW_CFA_offset: " + r + " at cfa" + (ins.value >= 0 ? "+" : "") + num(ins.value);
    case CfiOp::val_offset: return "DW_CFA_val_offset: " + r + " is cfa" + (ins.value >= 0 ? "+" : "") + num(ins.value);
    case CfiOp::restore: return "DW_CFA_restore: " + r;
    case CfiOp::undefined: return "DW_CFA_undefined: " + r;
    case CfiOp::same_value: return "DW_CFA_same_value: " + r;
    case CfiOp::register_rule: return "DW_CFA_register: " + r + " in r" + num(ins.value);
    case CfiOp::expression: return "DW_CFA_expression: " + r;
    case CfiOp::val_expression: return "DW_CFA_val_expression: " + r;
    case CfiOp::remember_state: return "DW_CFA_remember_state";
    case CfiOp::restore_state: return "DW_CFA_restore_state";
    case CfiOp::gnu_args_size: return "DW_CFA_GNU_args_size: " + num(ins.value);
    case CfiOp::other: return "DW_CFA_op " + hex(ins.opcode);
    }
    return "?";
}

}  // namespace ehfetch
