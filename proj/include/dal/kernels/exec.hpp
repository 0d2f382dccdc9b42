#pragma once

namespace dal::kernels {

/// Execution policy for the data-parallel kernels. `Serial` is the reference
/// path; `Parallel` must produce bitwise-identical results.
enum class Exec { Serial, Parallel };

/// Policy used by the autograd ops. Parallel unless overridden (tests flip it).
Exec default_exec();
void set_default_exec(Exec exec);

/// Number of OpenMP threads the parallel kernels use.
int num_threads();
void set_num_threads(int n);

}  // namespace dal::kernels
