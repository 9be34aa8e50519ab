#pragma once

// The fourteen acceptance criteria, runnable from the acceptance test binary
// and from `obsr selftest`.

#include <functional>
#include <string>
#include <vector>

namespace obsr::acceptance {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool passed = false;
    std::string detail;  ///< measured values, or the first failed check
    double seconds = 0.0;
};

struct Options {
    std::string configs_dir;  ///< holds the smoke configs (criterion 14)
    std::string scratch_dir;  ///< run directories for criterion 14
    std::vector<int> only;    ///< empty runs everything
};

/// Default location of the bundled configs, fixed at build time.
std::string default_configs_dir();

std::vector<CriterionResult> run(const Options& opt, const std::function<void(const CriterionResult&)>& on_result = {});

/// "PASS [ 1] title (1.2 s): detail"
std::string format(const CriterionResult& r);

}  // namespace obsr::acceptance
