#pragma once

#include <cstddef>
#include <exception>
#include <vector>

#include "obsr/exec.hpp"

namespace obsr {

/// Run body(i) for i in [0, n). Exceptions cannot cross an OpenMP region, so
/// they are captured per index and the lowest-index one is rethrown.
template <typename Body>
void parallel_for(std::size_t n, Exec exec, Body&& body, int chunk = 8) {
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<std::ptrdiff_t>(n);
    auto guarded = [&](std::ptrdiff_t i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    };
    if (exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic, chunk)
        for (std::ptrdiff_t i = 0; i < count; ++i) guarded(i);
    } else {
        for (std::ptrdiff_t i = 0; i < count; ++i) guarded(i);
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace obsr
