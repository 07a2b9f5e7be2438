#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace switchgeo::par {

// Worker budget. SWITCHGEO_THREADS caps the pool; set_threads(n) overrides at
// runtime (n = 0 restores the environment/hardware default).
int max_threads();
void set_threads(int n);

// Runs f(i) for i in [0, n). With a budget of one this is the plain serial
// loop; otherwise an OpenMP static-schedule loop. Callers must write results
// into per-index slots and reduce in index order, so both paths produce
// identical bits. Exceptions are captured and rethrown after the join.
template <class F>
void parallel_for(std::size_t n, F&& f) {
  const int nt = max_threads();
  if (nt <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
#ifdef _OPENMP
  std::exception_ptr err;
  std::mutex err_mutex;
#pragma omp parallel for schedule(static) num_threads(nt)
  for (long long i = 0; i < static_cast<long long>(n); ++i) {
    try {
      f(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
#else
  for (std::size_t i = 0; i < n; ++i) f(i);
#endif
}

}  // namespace switchgeo::par
