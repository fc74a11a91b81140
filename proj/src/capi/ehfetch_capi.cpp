#include "ehfetch/ehfetch.h"

#include "pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <new>

using namespace ehfetch;

struct ehf_result {
    DetectionResult r;
    double total_ms = 0;
    std::vector<std::uint64_t> stage[4];   // fde, recursive, pointer scan, final
};

struct ehf_batch {
    std::vector<BatchItem> items;
    std::vector<std::unique_ptr<ehf_result>> results;
};

struct ehf_report {
    DetectionReport rep;
};

namespace {

thread_local std::string g_last_error;

ehf_status status_of(ErrorCode c) {
    switch (c) {
    case ErrorCode::io: return EHF_ERR_IO;
    case ErrorCode::not_elf: return EHF_ERR_NOT_ELF;
    case ErrorCode::unsupported_arch: return EHF_ERR_UNSUPPORTED_ARCH;
    case ErrorCode::truncated: return EHF_ERR_TRUNCATED;
    case ErrorCode::out_of_range: return EHF_ERR_OUT_OF_RANGE;
    case ErrorCode::missing_eh_frame: return EHF_ERR_MISSING_EH_FRAME;
    case ErrorCode::cfi_decode: return EHF_ERR_CFI_DECODE;
    case ErrorCode::address_out_of_fde: return EHF_ERR_ADDRESS_OUT_OF_FDE;
    case ErrorCode::invalid_opcode: return EHF_ERR_INVALID_OPCODE;
    case ErrorCode::invalid_argument: return EHF_ERR_INVALID_ARGUMENT;
    }
    return EHF_ERR_INTERNAL;
}

ehf_status fail(ehf_status s, std::string msg) {
    g_last_error = std::move(msg);
    return s;
}

template <typename F>
ehf_status guarded(F&& f) {
    try {
        g_last_error.clear();
        return f();
    } catch (const Error& e) {
        return fail(status_of(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(EHF_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(EHF_ERR_INTERNAL, e.what());
    }
}

PipelineOptions convert(const ehf_options* o) {
    PipelineOptions p;
    if (!o) return p;
    p.recursion = o->recursion != 0;
    p.pointer_scan = o->pointer_scan != 0;
    p.tailcall_merge = o->tailcall_merge != 0;
    if (o->noreturn_list) p.noreturn_list = std::string(o->noreturn_list);
    if (o->shuffle_seeds) p.shuffle_seed = o->shuffle_seed;
    return p;
}

std::unique_ptr<ehf_result> wrap(DetectionResult r, double total_ms) {
    auto out = std::make_unique<ehf_result>();
    out->r = std::move(r);
    out->total_ms = total_ms;
    out->stage[0].assign(out->r.stage1_starts.begin(), out->r.stage1_starts.end());
    out->stage[1].assign(out->r.stage2_starts.begin(), out->r.stage2_starts.end());
    out->stage[2].assign(out->r.stage3_starts.begin(), out->r.stage3_starts.end());
    for (const auto& e : out->r.function_starts) out->stage[3].push_back(e.addr);
    return out;
}

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

ehf_status bad_index() { return fail(EHF_ERR_INVALID_ARGUMENT, "index out of range"); }

}  // namespace

extern "C" {

void ehf_options_init(ehf_options* opts) {
    if (!opts) return;
    *opts = ehf_options{1, 1, 1, nullptr, 0, 0};
}

ehf_status ehf_detect(const char* path, const ehf_options* opts, ehf_result** out) {
    if (!out) return fail(EHF_ERR_INVALID_ARGUMENT, "out is NULL");
    *out = nullptr;
    if (!path) return fail(EHF_ERR_INVALID_ARGUMENT, "path is NULL");
    return guarded([&] {
        auto t0 = std::chrono::steady_clock::now();
        DetectionResult r = run_pipeline(std::string(path), convert(opts));
        double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        *out = wrap(std::move(r), ms).release();
        return EHF_OK;
    });
}

void ehf_result_free(ehf_result* r) { delete r; }

const char* ehf_result_binary(const ehf_result* r) { return r ? r->r.binary.c_str() : ""; }

size_t ehf_result_start_count(const ehf_result* r) { return r ? r->r.function_starts.size() : 0; }

ehf_status ehf_result_start_at(const ehf_result* r, size_t i, uint64_t* addr, ehf_provenance* prov) {
    if (!r || i >= r->r.function_starts.size()) return bad_index();
    const auto& e = r->r.function_starts[i];
    if (addr) *addr = e.addr;
    if (prov) *prov = static_cast<ehf_provenance>(e.provenance);
    return EHF_OK;
}

size_t ehf_result_merged_count(const ehf_result* r) { return r ? r->r.merged.size() : 0; }

ehf_status ehf_result_merged_at(const ehf_result* r, size_t i, uint64_t* from, uint64_t* into) {
    if (!r || i >= r->r.merged.size()) return bad_index();
    if (from) *from = r->r.merged[i].from;
    if (into) *into = r->r.merged[i].into;
    return EHF_OK;
}

size_t ehf_result_diagnostic_count(const ehf_result* r) { return r ? r->r.diagnostics.size() : 0; }

ehf_status ehf_result_diagnostic_at(const ehf_result* r, size_t i, ehf_severity* sev, const char** stage,
                                    const char** message) {
    if (!r || i >= r->r.diagnostics.size()) return bad_index();
    const auto& d = r->r.diagnostics[i];
    if (sev) *sev = d.severity == Severity::warn ? EHF_SEV_WARN : EHF_SEV_INFO;
    if (stage) *stage = d.stage.c_str();
    if (message) *message = d.message.c_str();
    return EHF_OK;
}

size_t ehf_result_decision_count(const ehf_result* r) { return r ? r->r.decisions.size() : 0; }

ehf_status ehf_result_decision_at(const ehf_result* r, size_t i, ehf_decision* out) {
    if (!r || !out || i >= r->r.decisions.size()) return bad_index();
    const auto& d = r->r.decisions[i];
    out->jump = d.site.jump;
    out->owner = d.site.owner;
    out->target = d.site.target;
    out->has_stack_height = d.site.stack_height.has_value();
    out->stack_height = d.site.stack_height.value_or(0);
    out->verdict = static_cast<ehf_verdict>(d.verdict);
    out->reason = d.reason.c_str();
    return EHF_OK;
}

size_t ehf_result_rejected_count(const ehf_result* r) { return r ? r->r.rejected_fde_starts.size() : 0; }

ehf_status ehf_result_rejected_at(const ehf_result* r, size_t i, uint64_t* start, const char** reason) {
    if (!r || i >= r->r.rejected_fde_starts.size()) return bad_index();
    if (start) *start = r->r.rejected_fde_starts[i].start;
    if (reason) *reason = r->r.rejected_fde_starts[i].reason.c_str();
    return EHF_OK;
}

ehf_status ehf_result_stage_starts(const ehf_result* r, ehf_stage stage, const uint64_t** addrs, size_t* n) {
    if (!r || !addrs || !n || stage < EHF_STAGE_FDE || stage > EHF_STAGE_FINAL)
        return fail(EHF_ERR_INVALID_ARGUMENT, "bad stage query");
    const auto& v = r->stage[stage - 1];
    *addrs = v.data();
    *n = v.size();
    return EHF_OK;
}

double ehf_result_total_ms(const ehf_result* r) { return r ? r->total_ms : 0.0; }

ehf_status ehf_result_serialize(const ehf_result* r, ehf_format fmt, int include_diagnostics, char** out) {
    if (!r || !out) return fail(EHF_ERR_INVALID_ARGUMENT, "NULL argument");
    return guarded([&] {
        *out = dup_string(emit(r->r, fmt == EHF_FORMAT_TEXT ? OutputFormat::text : OutputFormat::json,
                               include_diagnostics != 0));
        return EHF_OK;
    });
}

ehf_status ehf_detect_batch(const char* const* paths, size_t n, const ehf_options* opts, unsigned jobs,
                            ehf_batch** out) {
    if (!out || (n && !paths)) return fail(EHF_ERR_INVALID_ARGUMENT, "NULL argument");
    *out = nullptr;
    return guarded([&] {
        std::vector<std::string> ps;
        for (size_t i = 0; i < n; ++i) {
            if (!paths[i]) return fail(EHF_ERR_INVALID_ARGUMENT, "NULL path in batch");
            ps.emplace_back(paths[i]);
        }
        auto b = std::make_unique<ehf_batch>();
        b->items = run_batch(ps, convert(opts), jobs);
        for (auto& it : b->items) {
            if (it.result) {
                double total = 0;
                for (const auto& [_, ms] : it.result->timings_ms) total += ms;
                b->results.push_back(wrap(std::move(*it.result), total));
                it.result.reset();
            } else {
                b->results.push_back(nullptr);
            }
        }
        *out = b.release();
        return EHF_OK;
    });
}

size_t ehf_batch_count(const ehf_batch* b) { return b ? b->items.size() : 0; }

ehf_status ehf_batch_item(const ehf_batch* b, size_t i, const ehf_result** result, ehf_status* status,
                          const char** message) {
    if (!b || i >= b->items.size()) return bad_index();
    const auto& it = b->items[i];
    if (result) *result = b->results[i].get();
    if (status) *status = it.error ? status_of(it.error->code()) : EHF_OK;
    if (message) *message = it.error ? it.error->what() : "";
    return EHF_OK;
}

void ehf_batch_free(ehf_batch* b) { delete b; }

ehf_status ehf_evaluate(const ehf_result* r, const uint64_t* truth, size_t n, ehf_report** out) {
    if (!r || !out || (n && !truth)) return fail(EHF_ERR_INVALID_ARGUMENT, "NULL argument");
    return guarded([&] {
        std::set<Addr> t(truth, truth + n);
        *out = new ehf_report{evaluate(r->r, t)};
        return EHF_OK;
    });
}

ehf_report_counts ehf_report_get_counts(const ehf_report* rep) {
    if (!rep) return ehf_report_counts{0, 0, 0, 1.0, 1.0};
    return {rep->rep.true_positives.size(), rep->rep.false_positives.size(), rep->rep.false_negatives.size(),
            rep->rep.precision, rep->rep.recall};
}

ehf_status ehf_report_get_list(const ehf_report* rep, ehf_report_list which, const uint64_t** addrs, size_t* n) {
    if (!rep || !addrs || !n) return fail(EHF_ERR_INVALID_ARGUMENT, "NULL argument");
    const std::vector<Addr>* v = nullptr;
    switch (which) {
    case EHF_LIST_TP: v = &rep->rep.true_positives; break;
    case EHF_LIST_FP: v = &rep->rep.false_positives; break;
    case EHF_LIST_FN: v = &rep->rep.false_negatives; break;
    default: return fail(EHF_ERR_INVALID_ARGUMENT, "unknown list");
    }
    *addrs = v->data();
    *n = v->size();
    return EHF_OK;
}

void ehf_report_free(ehf_report* rep) { delete rep; }

ehf_status ehf_read_truth_file(const char* path, uint64_t** addrs, size_t* n) {
    if (!path || !addrs || !n) return fail(EHF_ERR_INVALID_ARGUMENT, "NULL argument");
    *addrs = nullptr;
    *n = 0;
    return guarded([&] {
        auto t = read_truth_file(path);
        auto* p = static_cast<uint64_t*>(std::malloc(std::max<size_t>(t.size(), 1) * sizeof(uint64_t)));
        if (!p) throw std::bad_alloc();
        std::copy(t.begin(), t.end(), p);
        *addrs = p;
        *n = t.size();
        return EHF_OK;
    });
}

void ehf_u64_free(uint64_t* p) { std::free(p); }

ehf_status ehf_frames_dump(const char* path, char** out) {
    if (!path || !out) return fail(EHF_ERR_INVALID_ARGUMENT, "NULL argument");
    *out = nullptr;
    return guarded([&] {
        *out = dup_string(frames_dump(BinaryImage::load(path)));
        return EHF_OK;
    });
}

void ehf_string_free(char* s) { std::free(s); }

const char* ehf_status_string(ehf_status s) {
    switch (s) {
    case EHF_OK: return "ok";
    case EHF_ERR_IO: return "I/O error";
    case EHF_ERR_NOT_ELF: return "not an ELF file";
    case EHF_ERR_UNSUPPORTED_ARCH: return "unsupported architecture";
    case EHF_ERR_TRUNCATED: return "truncated input";
    case EHF_ERR_OUT_OF_RANGE: return "address out of range";
    case EHF_ERR_MISSING_EH_FRAME: return "missing .eh_frame";
    case EHF_ERR_CFI_DECODE: return "CFI decode error";
    case EHF_ERR_ADDRESS_OUT_OF_FDE: return "address outside FDE";
    case EHF_ERR_INVALID_OPCODE: return "invalid opcode";
    case EHF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case EHF_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* ehf_provenance_string(ehf_provenance p) {
    switch (p) {
    case EHF_PROV_FDE: return "fde";
    case EHF_PROV_CALL_TARGET: return "call_target";
    case EHF_PROV_POINTER: return "pointer";
    case EHF_PROV_TAIL_CALL: return "tail_call";
    }
    return "?";
}

const char* ehf_last_error(void) { return g_last_error.c_str(); }

const char* ehf_version(void) { return "0.1.0"; }

}  // extern "C"
