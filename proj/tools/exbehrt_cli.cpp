// Command-line front end over the exbehrt C API. Usage:
//   exbehrt <command> [--config FILE] [KEY=VALUE]...
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include <cstdio>
#include <cstring>
#include <string>

#include "exbehrt.h"

namespace {

void print_usage() {
    std::printf("usage: exbehrt <command> [--config FILE] [KEY=VALUE]...\n");
    std::printf("       exbehrt <command> --help   list the command's keys\n");
    std::printf("commands: %s\n", exb_commands());
    std::printf("version: %s\n", exb_version());
}

int finish(exb_run* run, exb_status status) {
    if (status != EXB_OK) std::fprintf(stderr, "error: %s\n", exb_run_error(run));
    exb_run_free(run);
    return static_cast<int>(status);
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2 || std::strcmp(argv[1], "--help") == 0 || std::strcmp(argv[1], "-h") == 0) {
        print_usage();
        return argc < 2 ? 1 : 0;
    }

    exb_run* run = exb_run_new(argv[1]);
    if (!run) {
        std::fprintf(stderr, "error: unknown command: %s\n", argv[1]);
        print_usage();
        return 1;
    }

    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--help" || arg == "-h") {
            std::printf("keys for %s (key=default, empty default = required):\n%s", argv[1],
                        exb_run_keys(run));
            exb_run_free(run);
            return 0;
        }
        if (arg == "--config") {
            if (i + 1 >= argc) {
                std::fprintf(stderr, "error: --config needs a file path\n");
                exb_run_free(run);
                return 1;
            }
            const exb_status st = exb_run_load_config(run, argv[++i]);
            if (st != EXB_OK) return finish(run, st);
            continue;
        }
        const size_t eq = arg.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::fprintf(stderr, "error: expected KEY=VALUE, got: %s\n", arg.c_str());
            exb_run_free(run);
            return 1;
        }
        const exb_status st =
            exb_run_set(run, arg.substr(0, eq).c_str(), arg.substr(eq + 1).c_str());
        if (st != EXB_OK) return finish(run, st);
    }

    const exb_status st = exb_run_exec(run);
    if (st == EXB_OK) std::printf("%s\n", exb_run_summary(run));
    return finish(run, st);
}
