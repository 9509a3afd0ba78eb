#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace nkcme::parallel {

inline int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline bool in_parallel() {
#if defined(_OPENMP)
  return omp_in_parallel();
#else
  return false;
#endif
}

/// Runs f(i) for i in [0, n). Iterations must write disjoint outputs; the
/// result is then identical to the serial loop regardless of thread count.
/// The first exception thrown by any iteration is rethrown on the caller.
template <class F>
void for_each_index(std::ptrdiff_t n, F&& f) {
#if defined(_OPENMP)
  if (n > 1 && !omp_in_parallel() && omp_get_max_threads() > 1) {
    std::exception_ptr error;
    std::mutex m;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      try {
        f(i);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
      }
    }
    if (error) std::rethrow_exception(error);
    return;
  }
#endif
  for (std::ptrdiff_t i = 0; i < n; ++i) f(i);
}

}  // namespace nkcme::parallel
