#pragma once

#include <cstddef>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qsdlab {

/// Every data-parallel kernel ships a serial reference path; the two must
/// produce bit-identical results (each work item owns its output slot and
/// its RNG stream, and reductions are order-independent or merged serially).
enum class ExecPolicy { serial, parallel };

inline int max_threads() noexcept {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) noexcept {
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#else
    (void)n;
#endif
}

/// body(i) for i in [0, n). Iterations must be independent.
template <class Body>
void parallel_for(ExecPolicy policy, std::int64_t n, Body&& body) {
    if (policy == ExecPolicy::serial || n < 2) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t i = 0; i < n; ++i) body(i);
#else
    for (std::int64_t i = 0; i < n; ++i) body(i);
#endif
}

/// Same as parallel_for but with static scheduling, for uniform-cost loops
/// such as sparse matrix-vector rows.
template <class Body>
void parallel_for_static(ExecPolicy policy, std::int64_t n, Body&& body) {
    if (policy == ExecPolicy::serial || n < 256) {
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) body(i);
#else
    for (std::int64_t i = 0; i < n; ++i) body(i);
#endif
}

} // namespace qsdlab
