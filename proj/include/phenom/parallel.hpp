#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace phenom {

// Execution mode for the compute kernels. Parallel kernels assign disjoint
// output ranges per thread and keep inner loops serial, so both modes produce
// bit-identical results; tests rely on that.
enum class Exec { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline bool in_parallel_region() {
#ifdef _OPENMP
  return omp_in_parallel() != 0;
#else
  return false;
#endif
}

}  // namespace phenom
