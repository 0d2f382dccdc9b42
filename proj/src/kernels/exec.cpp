#include "dal/kernels/exec.hpp"

#include <omp.h>

namespace dal::kernels {

namespace {
Exec g_exec = Exec::Parallel;
}

Exec default_exec() { return g_exec; }
void set_default_exec(Exec exec) { g_exec = exec; }

int num_threads() { return omp_get_max_threads(); }
void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace dal::kernels
