#pragma once

#include <exception>

namespace p3d::detail {

/// Runs f(0..n-1), in parallel when OpenMP is available. The first exception
/// thrown by any iteration is rethrown after the loop.
template <class F>
void parallel_for(long n, F&& f) {
    std::exception_ptr err;
#if defined(P3D_HAVE_OPENMP)
#pragma omp parallel for schedule(dynamic)
#endif
    for (long i = 0; i < n; ++i) {
        try {
            f(i);
        } catch (...) {
#if defined(P3D_HAVE_OPENMP)
#pragma omp critical(p3d_parallel_for_error)
#endif
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

}  // namespace p3d::detail
