#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include <doctest.h>

#include "modsteer/dataset.hpp"
#include "modsteer/io.hpp"
#include "modsteer/synthetic.hpp"
#include "modsteer/toy_backend.hpp"

namespace testing {

inline std::filesystem::path source_dir() {
    return MODSTEER_SOURCE_DIR;
}

inline std::filesystem::path data_path(const std::string & name) {
    return source_dir() / "data" / name;
}

inline std::vector<modsteer::ConflictSample> fixture() {
    return modsteer::load_dataset(data_path("toy_fixture.jsonl")).samples;
}

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string & name) {
    auto p = std::filesystem::temp_directory_path() / ("modsteer_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Compares against tests/golden/<name>; MODSTEER_UPDATE_GOLDEN=1 rewrites the file instead.
inline void check_golden(const std::string & name, const std::string & actual) {
    const auto p = source_dir() / "tests" / "golden" / name;
    const char * update = std::getenv("MODSTEER_UPDATE_GOLDEN");
    if (update && std::string(update) == "1") {
        std::filesystem::create_directories(p.parent_path());
        modsteer::write_file(p, actual);
        MESSAGE("golden rewritten: " << p.string());
        return;
    }
    REQUIRE_MESSAGE(std::filesystem::exists(p), "missing golden " << p.string()
                                                                  << " (run with MODSTEER_UPDATE_GOLDEN=1)");
    CHECK(modsteer::read_file(p) == actual);
}

// The tuned toy with oracle scenes for the fixture and the synthetic probe pool.
inline modsteer::ToyConfig toy_config(modsteer::ToyConfig cfg = {}) {
    modsteer::add_oracle_scenes(cfg, fixture());
    modsteer::add_oracle_scenes(cfg, modsteer::load_dataset(data_path("toy_probe.jsonl")).samples);
    return cfg;
}

inline modsteer::ConflictSample make_sample(std::string id, modsteer::TaskType t, std::string av, std::string at) {
    modsteer::ConflictSample s;
    s.id = std::move(id);
    s.task_type = t;
    s.image_ref = "images/" + s.id + ".jpg";
    s.text_context = "Someone says it is " + at + ".";
    s.question = "What is it?";
    s.answer_vision = std::move(av);
    s.answer_text = std::move(at);
    return s;
}

} // namespace testing
