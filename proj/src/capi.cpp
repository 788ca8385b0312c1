#include "exbehrt.h"

#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "error.hpp"
#include "io.hpp"

using namespace exbehrt;

struct exb_run {
    std::string command;
    std::map<std::string, std::string> defaults;
    std::map<std::string, std::string> file_values;
    std::map<std::string, std::string> overrides;
    std::string summary;
    std::string error;
    std::string keys_buffer;
};

namespace {

exb_status status_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Usage: return EXB_USAGE_ERROR;
        case ErrorKind::Data: return EXB_DATA_ERROR;
        default: return EXB_INTERNAL_ERROR;
    }
}

exb_status fail(exb_run* run, exb_status status, const std::string& message) {
    run->error = message;
    return status;
}

} // namespace

extern "C" {

const char* exb_version(void) { return "0.1.0"; }

const char* exb_commands(void) {
    static std::string joined = [] {
        std::string out;
        for (const auto& name : command_names()) {
            if (!out.empty()) out += ' ';
            out += name;
        }
        return out;
    }();
    return joined.c_str();
}

exb_run* exb_run_new(const char* command) {
    if (!command) return nullptr;
    try {
        auto run = new exb_run;
        run->command = command;
        run->defaults = command_defaults(command);
        return run;
    } catch (...) {
        return nullptr;
    }
}

void exb_run_free(exb_run* run) { delete run; }

const char* exb_run_keys(exb_run* run) {
    if (!run) return "";
    std::ostringstream os;
    for (const auto& [k, v] : run->defaults) os << k << '=' << v << '\n';
    run->keys_buffer = os.str();
    return run->keys_buffer.c_str();
}

exb_status exb_run_load_config(exb_run* run, const char* path) {
    if (!run) return EXB_USAGE_ERROR;
    if (!path) return fail(run, EXB_USAGE_ERROR, "config path is null");
    try {
        auto values = read_config(path);
        for (const auto& [k, v] : values)
            if (!run->defaults.count(k))
                throw usage_error("unknown key '" + k + "' for command " + run->command);
        for (auto& [k, v] : values) run->file_values[k] = v;
        return EXB_OK;
    } catch (const ExbError& e) {
        return fail(run, status_of(e.kind()), e.what());
    } catch (const std::exception& e) {
        return fail(run, EXB_INTERNAL_ERROR, e.what());
    }
}

exb_status exb_run_set(exb_run* run, const char* key, const char* value) {
    if (!run) return EXB_USAGE_ERROR;
    if (!key || !value) return fail(run, EXB_USAGE_ERROR, "key and value must be non-null");
    if (!run->defaults.count(key))
        return fail(run, EXB_USAGE_ERROR,
                    "unknown key '" + std::string(key) + "' for command " + run->command);
    run->overrides[key] = value;
    return EXB_OK;
}

exb_status exb_run_exec(exb_run* run) {
    if (!run) return EXB_USAGE_ERROR;
    std::map<std::string, std::string> config = run->file_values;
    for (const auto& [k, v] : run->overrides) config[k] = v;
    try {
        const CommandResult result = run_command(run->command, config, std::cerr);
        run->summary = result.summary;
        run->error.clear();
        return EXB_OK;
    } catch (const ExbError& e) {
        return fail(run, status_of(e.kind()), e.what());
    } catch (const std::exception& e) {
        return fail(run, EXB_INTERNAL_ERROR, e.what());
    }
}

const char* exb_run_summary(const exb_run* run) { return run ? run->summary.c_str() : ""; }

const char* exb_run_error(const exb_run* run) { return run ? run->error.c_str() : ""; }

} // extern "C"
