#pragma once

// Reader for the frozen `readelf --debug-dump=frames-interp` output stored
// next to each fixture.

#include "common.hpp"

#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ehfetch::testing {

struct OracleRow {
    Addr loc = 0;
    std::string cfa;   // e.g. "rsp+16", "rbp+16", "exp"

    /// CFA offset when the CFA is rsp-based.
    std::optional<std::int64_t> rsp_offset() const {
        if (cfa.rfind("rsp+", 0) != 0) return std::nullopt;
        return std::stoll(cfa.substr(4));
    }
};

struct OracleFde {
    Addr begin = 0;
    Addr end = 0;
    std::vector<OracleRow> rows;   // rows printed for the FDE; CIE rows fill in when absent
};

inline std::vector<OracleFde> parse_frames_oracle(const std::string& text) {
    std::vector<OracleFde> out;
    std::vector<OracleRow> cie_rows;
    enum { none, in_cie, in_fde } state = none;
    std::istringstream in(text);
    std::string line;
    auto finish_fde = [&] {
        if (state == in_fde && out.back().rows.empty())
            for (const auto& r : cie_rows) out.back().rows.push_back({out.back().begin, r.cfa});
    };
    while (std::getline(in, line)) {
        if (line.find(" CIE") != std::string::npos && line.find("FDE") == std::string::npos) {
            finish_fde();
            state = in_cie;
            cie_rows.clear();
            continue;
        }
        if (auto p = line.find(" FDE cie="); p != std::string::npos) {
            finish_fde();
            state = in_fde;
            auto pc = line.find("pc=");
            auto dots = line.find("..", pc);
            OracleFde f;
            f.begin = std::stoull(line.substr(pc + 3, dots - pc - 3), nullptr, 16);
            f.end = std::stoull(line.substr(dots + 2), nullptr, 16);
            out.push_back(f);
            continue;
        }
        std::istringstream ls(line);
        std::string loc, cfa;
        if (!(ls >> loc >> cfa) || loc == "LOC") continue;
        if (loc.find_first_not_of("0123456789abcdef") != std::string::npos) continue;
        OracleRow r{std::stoull(loc, nullptr, 16), cfa};
        if (state == in_cie) cie_rows.push_back(r);
        else if (state == in_fde) out.back().rows.push_back(r);
    }
    finish_fde();
    return out;
}

}  // namespace ehfetch::testing
