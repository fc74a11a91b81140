#pragma once

#include "common.hpp"
#include "elf_image.hpp"
#include "pointer_scan.hpp"
#include "tailcall.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ehfetch {

struct PipelineOptions {
    bool recursion = true;        // safe recursive disassembly; off means FDE starts only
    bool pointer_scan = true;
    bool tailcall_merge = true;   // also gates the rejection of bad FDE starts
    std::optional<std::string> noreturn_list;   // extends the built-in list
    std::optional<std::uint64_t> shuffle_seed;  // seed FDE starts in a shuffled order
};

struct StartEntry {
    Addr addr = 0;
    Provenance provenance = Provenance::fde;
    bool operator==(const StartEntry&) const = default;
};

struct MergedPair {
    Addr from = 0;
    Addr into = 0;
    bool operator==(const MergedPair&) const = default;
};

struct DetectionResult {
    std::string binary;
    std::vector<StartEntry> function_starts;   // ascending, unique
    std::vector<MergedPair> merged;
    Diagnostics diagnostics;
    std::map<std::string, double> timings_ms;

    // Per-stage detail, not part of the serialized form.
    std::set<Addr> stage1_starts;
    std::set<Addr> stage2_starts;
    std::set<Addr> stage3_starts;
    std::vector<MergeDecision> decisions;
    std::vector<RejectedStart> rejected_fde_starts;
    std::vector<PointerCandidate> accepted_pointers;
    std::vector<AddrRange> plt_ranges;

    std::set<Addr> starts() const;
    std::optional<Provenance> provenance_of(Addr a) const;
};

DetectionResult run_pipeline(const std::string& path, const PipelineOptions& opts = {});
DetectionResult run_pipeline(const BinaryImage& img, const PipelineOptions& opts = {});

struct BatchItem {
    std::string path;
    std::optional<DetectionResult> result;
    std::optional<Error> error;
};

/// Runs independent pipelines over many binaries on `jobs` worker threads.
/// Items come back in input order.
std::vector<BatchItem> run_batch(const std::vector<std::string>& paths, const PipelineOptions& opts, unsigned jobs);

struct DetectionReport {
    std::vector<Addr> true_positives;
    std::vector<Addr> false_positives;
    std::vector<Addr> false_negatives;
    double precision = 1.0;
    double recall = 1.0;
};

/// Exact-address comparison. Addresses inside `excluded` (PLT stubs) are
/// ignored on both sides.
DetectionReport evaluate(const std::set<Addr>& detected, const std::set<Addr>& truth,
                         const std::vector<AddrRange>& excluded = {});
DetectionReport evaluate(const DetectionResult& result, const std::set<Addr>& truth);

/// Ground truth: one 0x-prefixed hex address per line, `#` starts a comment.
std::set<Addr> parse_truth(std::string_view text);
std::set<Addr> read_truth_file(const std::string& path);

enum class OutputFormat { json, text };
std::string emit(const DetectionResult& r, OutputFormat fmt, bool include_diagnostics = false);
/// Inverse of emit(json): restores binary, starts, merged pairs and diagnostics.
DetectionResult parse_result_json(std::string_view json);

/// Human-readable dump of parsed CIEs/FDEs, decoded CFI and stack heights.
std::string frames_dump(const BinaryImage& img);

}  // namespace ehfetch
