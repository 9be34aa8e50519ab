#pragma once

namespace obsr {

/// Selects the OpenMP kernel or its single-threaded reference. Both must give
/// identical results; the serial path exists for testing and benchmarking.
enum class Exec { parallel, serial };

/// Set the OpenMP thread count for subsequent parallel kernels (0 = runtime default).
void set_threads(int n);
int max_threads();

}  // namespace obsr
