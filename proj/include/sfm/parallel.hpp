#pragma once

#include <cstdint>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace sfm {

// Every parallel loop in the library is data-parallel over independent output
// elements: a given element is always computed by exactly one thread with a
// fixed internal summation order, so Serial and Parallel produce bit-identical
// results. Tests pin this down; the bench tool compares throughput.
enum class ExecMode { Serial, Parallel };

ExecMode exec_mode();
void set_exec_mode(ExecMode m);
int max_threads();

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn, ExecMode mode) {
#if defined(_OPENMP)
  if (mode == ExecMode::Parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
#else
  (void)mode;
#endif
  for (std::int64_t i = 0; i < n; ++i) fn(i);
}

template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
  parallel_for(n, static_cast<Fn&&>(fn), exec_mode());
}

}  // namespace sfm
