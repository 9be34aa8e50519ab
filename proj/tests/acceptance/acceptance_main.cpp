// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.
// Optional arguments restrict the run to the listed criterion numbers.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <unistd.h>

#include "obsr/selftest/acceptance.hpp"

int main(int argc, char** argv) {
    obsr::acceptance::Options opt;
    for (int i = 1; i < argc; ++i) opt.only.push_back(std::atoi(argv[i]));
    opt.scratch_dir = (std::filesystem::temp_directory_path() / ("obsr-acceptance-" + std::to_string(::getpid()))).string();
    int failed = 0;
    obsr::acceptance::run(opt, [&](const obsr::acceptance::CriterionResult& r) {
        std::printf("%s\n", obsr::acceptance::format(r).c_str());
        std::fflush(stdout);
        failed += !r.passed;
    });
    std::filesystem::remove_all(opt.scratch_dir);
    return failed == 0 ? 0 : 1;
}
