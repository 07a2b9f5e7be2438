#include "switchgeo/parallel.hpp"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace switchgeo::par {

namespace {

int env_default() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (const char* s = std::getenv("SWITCHGEO_THREADS")) {
    const int cap = std::atoi(s);
    if (cap > 0 && cap < n) n = cap;
  }
  return n < 1 ? 1 : n;
}

std::atomic<int> g_override{0};

}  // namespace

int max_threads() {
  const int o = g_override.load(std::memory_order_relaxed);
  if (o > 0) return o;
  static const int def = env_default();
  return def;
}

void set_threads(int n) { g_override.store(n > 0 ? n : 0, std::memory_order_relaxed); }

}  // namespace switchgeo::par
