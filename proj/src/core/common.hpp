#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ehfetch {

using Addr = std::uint64_t;

enum class ErrorCode {
    io,
    not_elf,
    unsupported_arch,
    truncated,
    out_of_range,
    missing_eh_frame,
    cfi_decode,
    address_out_of_fde,
    invalid_opcode,
    invalid_argument,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

enum class Severity { info, warn };

struct Diagnostic {
    Severity severity = Severity::info;
    std::string stage;
    std::string message;

    bool operator==(const Diagnostic&) const = default;
};

using Diagnostics = std::vector<Diagnostic>;

std::string hex(Addr value);

/// Half-open address interval.
struct AddrRange {
    Addr begin = 0;
    Addr end = 0;

    bool contains(Addr a) const { return a >= begin && a < end; }
    bool empty() const { return end <= begin; }
    auto operator<=>(const AddrRange&) const = default;
};

}  // namespace ehfetch
