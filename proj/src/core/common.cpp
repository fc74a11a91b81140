#include "common.hpp"

#include <cstdio>

namespace ehfetch {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::io: return "Io";
    case ErrorCode::not_elf: return "NotElf";
    case ErrorCode::unsupported_arch: return "UnsupportedArch";
    case ErrorCode::truncated: return "Truncated";
    case ErrorCode::out_of_range: return "OutOfRange";
    case ErrorCode::missing_eh_frame: return "MissingEhFrame";
    case ErrorCode::cfi_decode: return "CfiDecodeError";
    case ErrorCode::address_out_of_fde: return "AddressOutOfFde";
    case ErrorCode::invalid_opcode: return "InvalidOpcode";
    case ErrorCode::invalid_argument: return "InvalidArgument";
    }
    return "Unknown";
}

std::string hex(Addr value) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(value));
    return buf;
}

}  // namespace ehfetch
