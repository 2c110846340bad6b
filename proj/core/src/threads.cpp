#include "p3d/threads.hpp"

#ifdef P3D_HAVE_OPENMP
#include <omp.h>
#endif

namespace p3d {

void set_max_threads(int n) {
    if (n < 1) return;
#ifdef P3D_HAVE_OPENMP
    omp_set_num_threads(n);
#endif
}

int max_threads() {
#ifdef P3D_HAVE_OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace p3d
