#pragma once

// Access to the checked-in fixture snapshot and its manifest.

#include "common.hpp"
#include "pipeline.hpp"

#include <json.hpp>

#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef EHF_FIXTURE_DIR
#error "EHF_FIXTURE_DIR must point at the fixture snapshot"
#endif

namespace ehfetch::testing {

struct FixtureEntry {
    std::string fixture;
    std::string opt;
    std::string variant;
    std::string kind;   // "c" or "asm"
    std::string stripped;
    std::string unstripped;
    std::string truth;
    std::string frames;
    std::string error_sites;
    bool skipped = false;

    std::string name() const { return fixture + "-" + variant; }
    std::set<Addr> truth_set() const { return read_truth_file(truth); }
};

inline std::string fixture_dir() { return EHF_FIXTURE_DIR; }

inline std::string fixture_path(const std::string& rel) { return fixture_dir() + "/" + rel; }

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::vector<FixtureEntry> load_manifest() {
    auto j = nlohmann::json::parse(slurp(fixture_path("manifest.json")));
    std::vector<FixtureEntry> out;
    auto path_of = [](const nlohmann::json& e, const char* key) {
        return e.contains(key) ? fixture_path(e[key].get<std::string>()) : std::string{};
    };
    for (const auto& e : j) {
        FixtureEntry f;
        f.fixture = e.value("fixture", "");
        f.opt = e.value("opt", "");
        f.variant = e.value("variant", f.opt);
        f.kind = e.value("kind", "c");
        f.skipped = e.contains("skipped");
        f.stripped = path_of(e, "stripped");
        f.unstripped = path_of(e, "unstripped");
        f.truth = path_of(e, "truth");
        f.frames = path_of(e, "frames");
        f.error_sites = path_of(e, "error_sites");
        out.push_back(std::move(f));
    }
    return out;
}

inline std::optional<FixtureEntry> find_fixture(const std::string& fixture, const std::string& variant = {}) {
    for (auto& f : load_manifest())
        if (f.fixture == fixture && !f.skipped && (variant.empty() || f.variant == variant)) return f;
    return std::nullopt;
}

}  // namespace ehfetch::testing
