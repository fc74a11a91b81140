// Exercises the shared library through its C header only.

#include <ehfetch/ehfetch.h>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

namespace {
std::string fixture(const char* name) { return std::string(EHF_FIXTURE_DIR) + "/" + name; }
}

TEST_CASE("detect, serialize, evaluate") {
    ehf_options o;
    ehf_options_init(&o);
    CHECK(o.recursion);
    CHECK(o.pointer_scan);
    CHECK(o.tailcall_merge);

    ehf_result* r = nullptr;
    REQUIRE(ehf_detect(fixture("split-asm").c_str(), &o, &r) == EHF_OK);
    REQUIRE(r);
    CHECK(ehf_result_merged_count(r) == 1);
    size_t n = ehf_result_start_count(r);
    CHECK(n > 0);
    uint64_t addr = 0;
    ehf_provenance prov;
    REQUIRE(ehf_result_start_at(r, 0, &addr, &prov) == EHF_OK);
    CHECK(ehf_result_start_at(r, n, &addr, &prov) == EHF_ERR_INVALID_ARGUMENT);

    char* json = nullptr;
    REQUIRE(ehf_result_serialize(r, EHF_FORMAT_JSON, 0, &json) == EHF_OK);
    CHECK(std::string(json).find("\"function_starts\"") != std::string::npos);
    ehf_string_free(json);

    uint64_t* truth = nullptr;
    size_t tn = 0;
    REQUIRE(ehf_read_truth_file(fixture("split-asm.truth").c_str(), &truth, &tn) == EHF_OK);
    ehf_report* rep = nullptr;
    REQUIRE(ehf_evaluate(r, truth, tn, &rep) == EHF_OK);
    auto counts = ehf_report_get_counts(rep);
    CHECK(counts.false_positives == 0);
    CHECK(counts.false_negatives == 0);
    ehf_report_free(rep);
    ehf_u64_free(truth);
    ehf_result_free(r);
}

TEST_CASE("errors surface as status codes") {
    ehf_result* r = nullptr;
    CHECK(ehf_detect("/nonexistent/file", nullptr, &r) == EHF_ERR_IO);
    CHECK(r == nullptr);
    CHECK(std::string(ehf_last_error()).size() > 0);
    CHECK(ehf_detect(nullptr, nullptr, &r) == EHF_ERR_INVALID_ARGUMENT);
    CHECK(std::string(ehf_status_string(EHF_OK)).size() > 0);
    CHECK(std::string(ehf_provenance_string(EHF_PROV_POINTER)) == "pointer");
}

TEST_CASE("batch") {
    std::string a = fixture("plain-O2"), b = fixture("tailcall-O2");
    const char* paths[] = {a.c_str(), "/nonexistent/file", b.c_str()};
    ehf_batch* batch = nullptr;
    REQUIRE(ehf_detect_batch(paths, 3, nullptr, 2, &batch) == EHF_OK);
    REQUIRE(ehf_batch_count(batch) == 3);
    const ehf_result* res = nullptr;
    ehf_status st;
    const char* err = nullptr;
    REQUIRE(ehf_batch_item(batch, 1, &res, &st, &err) == EHF_OK);
    CHECK(st == EHF_ERR_IO);
    CHECK(res == nullptr);
    REQUIRE(ehf_batch_item(batch, 2, &res, &st, &err) == EHF_OK);
    CHECK(st == EHF_OK);
    CHECK(ehf_result_start_count(res) > 0);
    ehf_batch_free(batch);
}
