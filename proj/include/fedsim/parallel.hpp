#pragma once

// Client-loop kernel. Per-client work items are independent, so they may run
// under OpenMP; every call site merges results serially in ascending client
// order afterwards, which pins the floating-point summation order and keeps
// the parallel path bit-identical to the serial reference.

#include <functional>

#ifdef FEDSIM_HAVE_OPENMP
#include <omp.h>
#endif

namespace fedsim {

// Runs fn(k) for k in [0, n). threads <= 1 selects the serial reference path.
template <typename Fn>
void for_each_client(int n, int threads, Fn&& fn) {
#ifdef FEDSIM_HAVE_OPENMP
  if (threads > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
    for (int k = 0; k < n; ++k) fn(k);
    return;
  }
#else
  (void)threads;
#endif
  for (int k = 0; k < n; ++k) fn(k);
}

}  // namespace fedsim
