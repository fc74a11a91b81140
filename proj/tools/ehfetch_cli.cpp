// Command-line front end; talks to the library only through the C API.
#include "ehfetch/ehfetch.h"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitLoad = 1;
constexpr int kExitMismatch = 2;

struct StageFlags {
    bool no_recursion = false;
    bool no_pointer_scan = false;
    bool no_merge = false;
    std::string noreturn_list;

    void add_to(CLI::App* app) {
        app->add_flag("--no-recursion", no_recursion, "Report FDE starts only");
        app->add_flag("--no-pointer-scan", no_pointer_scan, "Skip the validated pointer scan");
        app->add_flag("--no-merge", no_merge, "Skip FDE-start rejection and the tail-call merge");
        app->add_option("--noreturn-list", noreturn_list, "Extra non-returning function names, one per line")
            ->check(CLI::ExistingFile);
    }
    ehf_options options() const {
        ehf_options o;
        ehf_options_init(&o);
        o.recursion = !no_recursion;
        o.pointer_scan = !no_pointer_scan;
        o.tailcall_merge = !no_merge;
        o.noreturn_list = noreturn_list.empty() ? nullptr : noreturn_list.c_str();
        return o;
    }
};

int report_error(const std::string& what, ehf_status s) {
    std::cerr << "ehfetch: " << what << ": " << ehf_status_string(s);
    if (*ehf_last_error()) std::cerr << ": " << ehf_last_error();
    std::cerr << "\n";
    return kExitLoad;
}

std::string serialize(const ehf_result* r, ehf_format fmt, bool diags) {
    char* s = nullptr;
    if (ehf_result_serialize(r, fmt, diags, &s) != EHF_OK) return {};
    std::string out(s);
    ehf_string_free(s);
    return out;
}

int write_output(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return kExitOk;
    }
    std::ofstream f(path);
    if (!f || !(f << text)) {
        std::cerr << "ehfetch: cannot write " << path << "\n";
        return kExitLoad;
    }
    return kExitOk;
}

int cmd_detect(const std::vector<std::string>& bins, const StageFlags& flags, const std::string& format,
               bool diags, unsigned jobs, const std::string& out_path) {
    const ehf_format fmt = format == "text" ? EHF_FORMAT_TEXT : EHF_FORMAT_JSON;
    ehf_options opts = flags.options();
    if (bins.size() == 1) {
        ehf_result* r = nullptr;
        if (ehf_status s = ehf_detect(bins[0].c_str(), &opts, &r); s != EHF_OK) return report_error(bins[0], s);
        std::string text = serialize(r, fmt, diags);
        ehf_result_free(r);
        return write_output(text, out_path);
    }

    std::vector<const char*> paths;
    for (const auto& b : bins) paths.push_back(b.c_str());
    ehf_batch* batch = nullptr;
    if (ehf_status s = ehf_detect_batch(paths.data(), paths.size(), &opts, jobs, &batch); s != EHF_OK)
        return report_error("batch", s);
    int rc = kExitOk;
    std::string text = fmt == EHF_FORMAT_JSON ? "[\n" : "";
    for (size_t i = 0; i < ehf_batch_count(batch); ++i) {
        const ehf_result* r = nullptr;
        ehf_status st = EHF_OK;
        const char* msg = "";
        ehf_batch_item(batch, i, &r, &st, &msg);
        if (!r) {
            std::cerr << "ehfetch: " << bins[i] << ": " << ehf_status_string(st) << ": " << msg << "\n";
            rc = kExitLoad;
            continue;
        }
        if (fmt == EHF_FORMAT_JSON) {
            if (text.size() > 2) text += ",\n";
            std::string one = serialize(r, fmt, diags);
            if (!one.empty() && one.back() == '\n') one.pop_back();
            text += one;
        } else {
            text += "# " + bins[i] + "\n" + serialize(r, fmt, diags);
        }
    }
    if (fmt == EHF_FORMAT_JSON) text += "\n]\n";
    ehf_batch_free(batch);
    int wrc = write_output(text, out_path);
    return rc != kExitOk ? rc : wrc;
}

int cmd_eval(const std::string& bin, const std::string& truth_path, const StageFlags& flags, long max_fp,
             long max_fn) {
    uint64_t* truth = nullptr;
    size_t n = 0;
    if (ehf_status s = ehf_read_truth_file(truth_path.c_str(), &truth, &n); s != EHF_OK)
        return report_error(truth_path, s);
    ehf_options opts = flags.options();
    ehf_result* r = nullptr;
    if (ehf_status s = ehf_detect(bin.c_str(), &opts, &r); s != EHF_OK) {
        ehf_u64_free(truth);
        return report_error(bin, s);
    }
    ehf_report* rep = nullptr;
    ehf_status s = ehf_evaluate(r, truth, n, &rep);
    ehf_u64_free(truth);
    if (s != EHF_OK) {
        ehf_result_free(r);
        return report_error("evaluate", s);
    }
    ehf_report_counts c = ehf_report_get_counts(rep);
    std::printf("binary:    %s\n", bin.c_str());
    std::printf("TP: %zu  FP: %zu  FN: %zu\n", c.true_positives, c.false_positives, c.false_negatives);
    std::printf("precision: %.4f  recall: %.4f\n", c.precision, c.recall);
    auto print_list = [&](ehf_report_list which, const char* label) {
        const uint64_t* a = nullptr;
        size_t k = 0;
        ehf_report_get_list(rep, which, &a, &k);
        for (size_t i = 0; i < k; ++i) std::printf("%s 0x%llx\n", label, static_cast<unsigned long long>(a[i]));
    };
    print_list(EHF_LIST_FP, "FP");
    print_list(EHF_LIST_FN, "FN");
    ehf_report_free(rep);
    ehf_result_free(r);
    bool over = (max_fp >= 0 && c.false_positives > static_cast<size_t>(max_fp)) ||
                (max_fn >= 0 && c.false_negatives > static_cast<size_t>(max_fn));
    return over ? kExitMismatch : kExitOk;
}

int cmd_frames(const std::string& bin) {
    char* s = nullptr;
    if (ehf_status st = ehf_frames_dump(bin.c_str(), &s); st != EHF_OK) return report_error(bin, st);
    std::cout << s;
    ehf_string_free(s);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Function-start detection for stripped x86-64 ELF binaries"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ehf_version());

    std::vector<std::string> bins;
    StageFlags dflags;
    std::string format = "json";
    bool diags = false;
    unsigned jobs = 1;
    std::string out_path;
    auto* detect = app.add_subcommand("detect", "Detect function starts");
    detect->add_option("binaries", bins, "ELF binaries")->required()->check(CLI::ExistingFile);
    dflags.add_to(detect);
    detect->add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "text"}));
    detect->add_flag("--diagnostics", diags, "Include diagnostics in JSON output");
    detect->add_option("-j,--jobs", jobs, "Worker threads for several binaries")->check(CLI::PositiveNumber);
    detect->add_option("-o,--output", out_path, "Write output to a file");

    std::string ebin, truth;
    StageFlags eflags;
    long max_fp = -1, max_fn = -1;
    auto* eval = app.add_subcommand("eval", "Compare detected starts with a ground-truth file");
    eval->add_option("binary", ebin, "ELF binary")->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", truth, "Ground-truth address file")->required()->check(CLI::ExistingFile);
    eflags.add_to(eval);
    eval->add_option("--max-fp", max_fp, "Exit with status 2 above this many false positives");
    eval->add_option("--max-fn", max_fn, "Exit with status 2 above this many false negatives");

    std::string fbin;
    auto* frames = app.add_subcommand("frames", "Dump parsed FDEs and stack-height tables");
    frames->add_option("binary", fbin, "ELF binary")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    if (*detect) return cmd_detect(bins, dflags, format, diags, jobs, out_path);
    if (*eval) return cmd_eval(ebin, truth, eflags, max_fp, max_fn);
    return cmd_frames(fbin);
}
