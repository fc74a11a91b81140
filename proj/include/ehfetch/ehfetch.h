/* ehfetch: function-start detection for stripped x86-64 ELF binaries,
 * driven by .eh_frame call-frame records. */
#ifndef EHFETCH_EHFETCH_H
#define EHFETCH_EHFETCH_H

#include <stddef.h>
#include <stdint.h>

#if defined(EHF_BUILDING_LIBRARY)
#define EHF_API __attribute__((visibility("default")))
#else
#define EHF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ehf_status {
    EHF_OK = 0,
    EHF_ERR_IO,
    EHF_ERR_NOT_ELF,
    EHF_ERR_UNSUPPORTED_ARCH,
    EHF_ERR_TRUNCATED,
    EHF_ERR_OUT_OF_RANGE,
    EHF_ERR_MISSING_EH_FRAME,
    EHF_ERR_CFI_DECODE,
    EHF_ERR_ADDRESS_OUT_OF_FDE,
    EHF_ERR_INVALID_OPCODE,
    EHF_ERR_INVALID_ARGUMENT,
    EHF_ERR_INTERNAL
} ehf_status;

typedef enum ehf_provenance {
    EHF_PROV_FDE = 0,
    EHF_PROV_CALL_TARGET,
    EHF_PROV_POINTER,
    EHF_PROV_TAIL_CALL
} ehf_provenance;

typedef enum ehf_severity { EHF_SEV_INFO = 0, EHF_SEV_WARN } ehf_severity;

typedef enum ehf_verdict { EHF_VERDICT_TAIL_CALL = 0, EHF_VERDICT_MERGED, EHF_VERDICT_SKIPPED } ehf_verdict;

typedef enum ehf_format { EHF_FORMAT_JSON = 0, EHF_FORMAT_TEXT } ehf_format;

/* Starts recorded after a pipeline stage. */
typedef enum ehf_stage {
    EHF_STAGE_FDE = 1,
    EHF_STAGE_RECURSIVE = 2,
    EHF_STAGE_POINTER_SCAN = 3,
    EHF_STAGE_FINAL = 4
} ehf_stage;

typedef struct ehf_options {
    int recursion;               /* nonzero: safe recursive disassembly */
    int pointer_scan;            /* nonzero: validated pointer scan */
    int tailcall_merge;          /* nonzero: FDE-start rejection and tail-call merge */
    const char* noreturn_list;   /* extra non-returning names, or NULL */
    int shuffle_seeds;           /* nonzero: seed FDE starts in an order drawn from shuffle_seed */
    uint64_t shuffle_seed;
} ehf_options;

typedef struct ehf_decision {
    uint64_t jump;
    uint64_t owner;
    uint64_t target;
    int has_stack_height;
    int64_t stack_height;
    ehf_verdict verdict;
    const char* reason;          /* owned by the result */
} ehf_decision;

typedef struct ehf_report_counts {
    size_t true_positives;
    size_t false_positives;
    size_t false_negatives;
    double precision;
    double recall;
} ehf_report_counts;

typedef enum ehf_report_list { EHF_LIST_TP = 0, EHF_LIST_FP, EHF_LIST_FN } ehf_report_list;

typedef struct ehf_result ehf_result;
typedef struct ehf_batch ehf_batch;
typedef struct ehf_report ehf_report;

/* All stages on, no extra list, no shuffling. */
EHF_API void ehf_options_init(ehf_options* opts);

/* opts may be NULL for defaults. On failure *out is NULL and
 * ehf_last_error() describes the problem. */
EHF_API ehf_status ehf_detect(const char* path, const ehf_options* opts, ehf_result** out);
EHF_API void ehf_result_free(ehf_result* r);

EHF_API const char* ehf_result_binary(const ehf_result* r);
EHF_API size_t ehf_result_start_count(const ehf_result* r);
EHF_API ehf_status ehf_result_start_at(const ehf_result* r, size_t i, uint64_t* addr, ehf_provenance* prov);
EHF_API size_t ehf_result_merged_count(const ehf_result* r);
EHF_API ehf_status ehf_result_merged_at(const ehf_result* r, size_t i, uint64_t* from, uint64_t* into);
EHF_API size_t ehf_result_diagnostic_count(const ehf_result* r);
EHF_API ehf_status ehf_result_diagnostic_at(const ehf_result* r, size_t i, ehf_severity* sev, const char** stage,
                                            const char** message);
EHF_API size_t ehf_result_decision_count(const ehf_result* r);
EHF_API ehf_status ehf_result_decision_at(const ehf_result* r, size_t i, ehf_decision* out);
EHF_API size_t ehf_result_rejected_count(const ehf_result* r);
EHF_API ehf_status ehf_result_rejected_at(const ehf_result* r, size_t i, uint64_t* start, const char** reason);
/* Sorted starts after a stage; the array is owned by the result. */
EHF_API ehf_status ehf_result_stage_starts(const ehf_result* r, ehf_stage stage, const uint64_t** addrs, size_t* n);
/* Wall time of the whole pipeline in milliseconds. */
EHF_API double ehf_result_total_ms(const ehf_result* r);

/* Serialized result; free with ehf_string_free. */
EHF_API ehf_status ehf_result_serialize(const ehf_result* r, ehf_format fmt, int include_diagnostics, char** out);

/* Independent pipelines over many binaries on `jobs` threads. Per-binary
 * failures are reported per item; the call itself fails only on bad input. */
EHF_API ehf_status ehf_detect_batch(const char* const* paths, size_t n, const ehf_options* opts, unsigned jobs,
                                    ehf_batch** out);
EHF_API size_t ehf_batch_count(const ehf_batch* b);
/* *result is NULL when the item failed; then *status and *message say why. */
EHF_API ehf_status ehf_batch_item(const ehf_batch* b, size_t i, const ehf_result** result, ehf_status* status,
                                  const char** message);
EHF_API void ehf_batch_free(ehf_batch* b);

/* Compares final starts against a sorted or unsorted truth list. PLT stubs
 * are left out of the comparison. */
EHF_API ehf_status ehf_evaluate(const ehf_result* r, const uint64_t* truth, size_t n, ehf_report** out);
EHF_API ehf_report_counts ehf_report_get_counts(const ehf_report* rep);
EHF_API ehf_status ehf_report_get_list(const ehf_report* rep, ehf_report_list which, const uint64_t** addrs, size_t* n);
EHF_API void ehf_report_free(ehf_report* rep);

/* Truth file: one 0x address per line, '#' comments. Free with ehf_u64_free. */
EHF_API ehf_status ehf_read_truth_file(const char* path, uint64_t** addrs, size_t* n);
EHF_API void ehf_u64_free(uint64_t* p);

/* Text dump of CIEs, FDEs, decoded CFI and stack heights. */
EHF_API ehf_status ehf_frames_dump(const char* path, char** out);

EHF_API void ehf_string_free(char* s);
EHF_API const char* ehf_status_string(ehf_status s);
EHF_API const char* ehf_provenance_string(ehf_provenance p);
/* Message of the last failure on this thread; "" if none. */
EHF_API const char* ehf_last_error(void);
EHF_API const char* ehf_version(void);

#ifdef __cplusplus
}
#endif

#endif
