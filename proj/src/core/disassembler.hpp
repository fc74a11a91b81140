#pragma once

#include "cfg.hpp"
#include "decoder.hpp"
#include "elf_image.hpp"
#include "noreturn.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ehfetch {

/// Outcome of validating a candidate start by speculative disassembly.
struct Speculation {
    bool accepted = false;
    std::string reason;               // first error, when rejected
    std::vector<Addr> new_starts;     // candidate plus newly reached callees, when accepted
};

/// Safe recursive disassembly over an evolving start set.
///
/// Each function is traversed independently from its start. Traversal is a
/// pure function of (start, current start set, current return statuses),
/// so results do not depend on the order starts were added. run() iterates
/// to a fixpoint: direct-call targets become starts, return statuses are
/// resolved, and functions whose inputs changed are traversed again.
class Disassembler {
public:
    Disassembler(const BinaryImage& img, const NoReturnDb& db, DecodeCache& cache);

    void add_start(Addr a, Provenance p, std::optional<std::size_t> fde_index = std::nullopt,
                   std::vector<AddrRange> hints = {});
    bool remove_start(Addr a);
    void add_hint(Addr start, AddrRange r);
    bool has_start(Addr a) const { return starts_.count(a) != 0; }

    void run();

    /// Snapshot of the current state (valid after run()).
    const FunctionSet& function_set() const { return fs_; }

    ReturnStatus status(Addr start) const;

    /// Disassembles from candidate without committing anything, and rejects
    /// on the first invalid opcode, overlap with decoded instructions, flow
    /// into the middle of a known function, or calling-convention violation.
    Speculation speculate(Addr candidate);

    /// Traverses from an address that need not be a start, without committing.
    FunctionCfg traverse_detached(Addr start);

    /// PLT stub import name for an address inside a PLT section, if known.
    std::optional<std::string> plt_name(Addr a);

    /// Starts traversed again or removed since the previous call.
    std::set<Addr> take_changed();

    /// Jump sites the merge pass has already decided, as (site, target).
    std::set<std::pair<Addr, Addr>>& classified_sites() { return classified_; }

private:
    struct StartInfo {
        Provenance provenance = Provenance::fde;
        std::optional<std::size_t> fde_index;
        std::vector<AddrRange> hints;
    };
    struct Traversal;

    Traversal traverse(Addr start, bool speculative);
    FunctionCfg to_cfg(Addr start, const Traversal& t) const;
    void store(Addr start, Traversal&& t);
    void mark_dependents(Addr a);
    bool update_statuses();
    ReturnStatus derive_status(const FunctionCfg& cfg) const;
    void statuses_changed(const std::set<Addr>& changed);
    void add_owner(Addr a, std::uint8_t len, Addr owner);
    void drop_owner(Addr a, Addr owner);
    bool break_stall();
    void rebuild_function_set();
    bool is_plt_address(Addr a) const;
    ReturnStatus callee_status(Addr target, Addr self) const;
    bool is_exit_syscall(const InsnGraph& g, Addr syscall) const;

    const BinaryImage& img_;
    NoReturnDb db_;
    DecodeCache& cache_;

    std::map<Addr, StartInfo> starts_;
    std::map<Addr, FunctionCfg> cfgs_;
    std::map<Addr, Diagnostics> diags_;
    std::map<Addr, std::set<Addr>> deps_;
    std::map<Addr, std::set<Addr>> rdeps_;
    std::map<Addr, ReturnStatus> status_;
    std::set<Addr> dirty_;
    std::set<Addr> unknown_;      // stored functions whose return status is open
    std::set<Addr> touched_;      // to re-copy into fs_
    std::set<Addr> changelog_;    // for take_changed()
    std::map<Addr, std::set<Addr>> owners_;   // instruction -> functions containing it
    std::set<Addr> invalid_;
    Diagnostics engine_diags_;
    std::map<Addr, std::optional<std::string>> plt_names_;
    std::vector<AddrRange> plt_ranges_;
    std::set<std::pair<Addr, Addr>> classified_;
    FunctionSet fs_;
};

/// Convenience wrapper: seeds are FDE-provenance starts.
FunctionSet recursive_disassemble(const BinaryImage& img, const std::set<Addr>& seeds,
                                  const NoReturnDb& db = NoReturnDb::builtin());

/// Address ranges of PLT sections (.plt, .plt.sec, .plt.got).
std::vector<AddrRange> plt_ranges(const BinaryImage& img);

}  // namespace ehfetch
