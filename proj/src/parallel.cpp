#include "sfm/parallel.hpp"

namespace sfm {

namespace {
ExecMode g_mode = ExecMode::Parallel;
}

ExecMode exec_mode() { return g_mode; }

void set_exec_mode(ExecMode m) { g_mode = m; }

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace sfm
