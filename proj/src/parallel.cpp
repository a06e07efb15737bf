#include "slod/parallel.hpp"

#include "slod/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace slod {

void set_thread_count(int threads) {
    SLOD_REQUIRE(threads >= 1, "thread count must be positive");
#ifdef _OPENMP
    omp_set_num_threads(threads);
#endif
}

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace slod
