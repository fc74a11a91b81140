#pragma once

#include "cfg.hpp"
#include "disassembler.hpp"
#include "elf_image.hpp"

#include <string>
#include <vector>

namespace ehfetch {

enum class CandidateOrigin { data_scan, code_gap_scan, code_constant, jump_table_entry };
std::string_view to_string(CandidateOrigin o);

enum class Validation { pending, accepted, rejected };

struct PointerCandidate {
    Addr value = 0;
    CandidateOrigin origin = CandidateOrigin::data_scan;
    Addr where = 0;              // address of the data word or of the instruction
    std::string section;         // section holding `where`
    Validation validated = Validation::pending;
    std::string reason;          // for rejections
};

/// One address-sized word found by scanning raw bytes.
struct ScannedWord {
    Addr where = 0;
    Addr value = 0;
    bool in_code_gap = false;
};

/// Every overlapping 8-byte little-endian word in allocated data sections and
/// in executable bytes not covered by decoded instructions, whose value lies in
/// an executable section.
std::vector<ScannedWord> scan_words(const BinaryImage& img, const FunctionSet& fs);

/// Immediate and displacement constants of decoded instructions that point
/// into executable sections, as (instruction, value).
std::vector<std::pair<Addr, Addr>> code_constants(const BinaryImage& img, const FunctionSet& fs);

/// Same, for one function's instructions.
std::vector<std::pair<Addr, Addr>> function_constants(const BinaryImage& img, const FunctionCfg& f);

/// Candidate set, deduplicated by value and sorted by value. Values that are
/// already starts, fall inside decoded instructions, lie in PLT sections or
/// are jump-table entries come back pre-rejected.
std::vector<PointerCandidate> collect_candidates(const BinaryImage& img, const FunctionSet& fs);

struct PointerScanReport {
    std::vector<PointerCandidate> accepted;
    std::vector<PointerCandidate> rejected;   // validated by speculation and refused
};

/// Validates pending candidates in ascending order by speculative disassembly.
/// Each accepted candidate is committed at once, and constants in the code it
/// brings in join the pending set.
PointerScanReport pointer_scan(const BinaryImage& img, Disassembler& dis);

}  // namespace ehfetch
