#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "exbehrt.h"

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "exbehrt_capi_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> split_words(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

// RAII so a failing REQUIRE cannot leak the handle.
struct RunHandle {
    exb_run* run;
    explicit RunHandle(const char* command) : run(exb_run_new(command)) {}
    ~RunHandle() { exb_run_free(run); }
    operator exb_run*() const { return run; }
};

} // namespace

TEST_CASE("version and command listing") {
    CHECK(std::string(exb_version()) == "0.1.0");
    const auto names = split_words(exb_commands());
    const std::vector<std::string> expected = {"generate", "pretrain",  "adapt",
                                               "finetune", "gridsearch", "attribute",
                                               "cluster",  "ablate",     "eval"};
    CHECK(names == expected);
    // The pointer is stable across calls.
    CHECK(exb_commands() == exb_commands());
}

TEST_CASE("run lifecycle: creation, null safety, and key listing") {
    CHECK(exb_run_new("no_such_command") == nullptr);
    CHECK(exb_run_new(nullptr) == nullptr);
    exb_run_free(nullptr); // must be a no-op

    RunHandle run("generate");
    REQUIRE(run.run != nullptr);
    CHECK(std::string(exb_run_summary(run)).empty());
    CHECK(std::string(exb_run_error(run)).empty());

    const std::string keys = exb_run_keys(run);
    CHECK(keys ==
          "min_visits=\nout=.\npatients=\nseed=\nshort_rate=\nspec=\nthreads=1\n");

    // Every command exposes out and threads with the same defaults.
    for (const auto& name : split_words(exb_commands())) {
        RunHandle r(name.c_str());
        REQUIRE(r.run != nullptr);
        const std::string k = exb_run_keys(r);
        CHECK(k.find("out=.\n") != std::string::npos);
        CHECK(k.find("threads=1\n") != std::string::npos);
    }

    // Null-handle accessors degrade to empty strings and usage errors.
    CHECK(std::string(exb_run_keys(nullptr)).empty());
    CHECK(std::string(exb_run_summary(nullptr)).empty());
    CHECK(std::string(exb_run_error(nullptr)).empty());
    CHECK(exb_run_set(nullptr, "out", ".") == EXB_USAGE_ERROR);
    CHECK(exb_run_exec(nullptr) == EXB_USAGE_ERROR);
    CHECK(exb_run_load_config(nullptr, "x") == EXB_USAGE_ERROR);
}

TEST_CASE("exb_run_set: validates keys and arguments") {
    RunHandle run("generate");
    REQUIRE(run.run != nullptr);
    CHECK(exb_run_set(run, "patients", "40") == EXB_OK);
    CHECK(exb_run_set(run, "bogus", "1") == EXB_USAGE_ERROR);
    CHECK(std::string(exb_run_error(run)) == "unknown key 'bogus' for command generate");
    CHECK(exb_run_set(run, nullptr, "1") == EXB_USAGE_ERROR);
    CHECK(exb_run_set(run, "patients", nullptr) == EXB_USAGE_ERROR);
    CHECK(std::string(exb_run_error(run)) == "key and value must be non-null");
}

TEST_CASE("exb_run_load_config: file precedence and validation") {
    const fs::path dir = fresh_dir("load_config");
    const fs::path good = dir / "good.cfg";
    {
        std::ofstream out(good);
        out << "# cohort size\npatients = 60\nseed=5\n";
    }

    RunHandle run("generate");
    REQUIRE(run.run != nullptr);
    CHECK(exb_run_load_config(run, good.string().c_str()) == EXB_OK);

    CHECK(exb_run_load_config(run, nullptr) == EXB_USAGE_ERROR);
    CHECK(std::string(exb_run_error(run)) == "config path is null");

    const std::string missing = (dir / "absent.cfg").string();
    CHECK(exb_run_load_config(run, missing.c_str()) == EXB_DATA_ERROR);
    CHECK(std::string(exb_run_error(run)).find("cannot open file") != std::string::npos);

    const fs::path unknown = dir / "unknown.cfg";
    {
        std::ofstream out(unknown);
        out << "nonsense_key=3\n";
    }
    CHECK(exb_run_load_config(run, unknown.string().c_str()) == EXB_USAGE_ERROR);
    CHECK(std::string(exb_run_error(run)).find("unknown key 'nonsense_key'") != std::string::npos);

    const fs::path malformed = dir / "malformed.cfg";
    {
        std::ofstream out(malformed);
        out << "just a bare line\n";
    }
    CHECK(exb_run_load_config(run, malformed.string().c_str()) == EXB_DATA_ERROR);
    CHECK(std::string(exb_run_error(run)).find("line 1: expected key=value") != std::string::npos);

    // The valid file loaded first still applies; overrides beat it.
    const fs::path out_dir = dir / "out";
    CHECK(exb_run_set(run, "out", out_dir.string().c_str()) == EXB_OK);
    CHECK(exb_run_set(run, "patients", "40") == EXB_OK);
    CHECK(exb_run_exec(run) == EXB_OK);
    const std::string summary = exb_run_summary(run);
    CHECK(summary.find("generate: 40 patients") == 0); // override beats the file's 60
    CHECK(summary.find("-> " + out_dir.string()) != std::string::npos);
    CHECK(std::string(exb_run_error(run)).empty()); // success clears the last error

    // The resolved config records the file-provided seed and the override.
    const std::string resolved = slurp(out_dir / "generate.config");
    CHECK(resolved.find("patients=40\n") != std::string::npos);
    CHECK(resolved.find("seed=5\n") != std::string::npos);
}

TEST_CASE("exec generate: writes artifacts and is deterministic per seed") {
    const fs::path dir_a = fresh_dir("gen_a");
    const fs::path dir_b = fresh_dir("gen_b");

    for (const fs::path& dir : {dir_a, dir_b}) {
        RunHandle run("generate");
        REQUIRE(run.run != nullptr);
        CHECK(exb_run_set(run, "patients", "40") == EXB_OK);
        CHECK(exb_run_set(run, "seed", "11") == EXB_OK);
        CHECK(exb_run_set(run, "out", dir.string().c_str()) == EXB_OK);
        REQUIRE(exb_run_exec(run) == EXB_OK);
        CHECK(std::string(exb_run_summary(run)).find("generate: 40 patients") == 0);
        for (const char* name : {"journeys.jsonl", "labels.csv", "archetypes.csv", "spec.json",
                                 "generate.config"})
            CHECK(fs::exists(dir / name));
    }
    for (const char* name : {"journeys.jsonl", "labels.csv", "archetypes.csv", "spec.json"})
        CHECK(slurp(dir_a / name) == slurp(dir_b / name));

    // A different seed changes the cohort.
    const fs::path dir_c = fresh_dir("gen_c");
    RunHandle run("generate");
    REQUIRE(run.run != nullptr);
    CHECK(exb_run_set(run, "patients", "40") == EXB_OK);
    CHECK(exb_run_set(run, "seed", "12") == EXB_OK);
    CHECK(exb_run_set(run, "out", dir_c.string().c_str()) == EXB_OK);
    REQUIRE(exb_run_exec(run) == EXB_OK);
    CHECK(slurp(dir_c / "journeys.jsonl") != slurp(dir_a / "journeys.jsonl"));
}

TEST_CASE("exec: usage and data failures set status and error text") {
    // Missing required key fails before any work happens.
    {
        RunHandle run("pretrain");
        REQUIRE(run.run != nullptr);
        CHECK(exb_run_exec(run) == EXB_USAGE_ERROR);
        CHECK(std::string(exb_run_error(run)) ==
              "missing required key 'journeys' for command pretrain");
        CHECK(std::string(exb_run_summary(run)).empty());
    }
    // A required key pointing at a missing file is a data error.
    {
        const fs::path dir = fresh_dir("exec_missing");
        RunHandle run("pretrain");
        REQUIRE(run.run != nullptr);
        CHECK(exb_run_set(run, "journeys", (dir / "absent.jsonl").string().c_str()) == EXB_OK);
        CHECK(exb_run_set(run, "out", dir.string().c_str()) == EXB_OK);
        CHECK(exb_run_exec(run) == EXB_DATA_ERROR);
        CHECK(std::string(exb_run_error(run)).find("cannot open file") != std::string::npos);
    }
    // Malformed values are usage errors.
    {
        const fs::path dir = fresh_dir("exec_badvalue");
        RunHandle run("generate");
        REQUIRE(run.run != nullptr);
        CHECK(exb_run_set(run, "patients", "many") == EXB_OK);
        CHECK(exb_run_set(run, "out", dir.string().c_str()) == EXB_OK);
        CHECK(exb_run_exec(run) == EXB_USAGE_ERROR);
        CHECK(std::string(exb_run_error(run)) == "key 'patients': not an integer: many");

        CHECK(exb_run_set(run, "patients", "40") == EXB_OK);
        CHECK(exb_run_set(run, "threads", "0") == EXB_OK);
        CHECK(exb_run_exec(run) == EXB_USAGE_ERROR);
        CHECK(std::string(exb_run_error(run)) == "key 'threads': must be at least 1");
    }
}
