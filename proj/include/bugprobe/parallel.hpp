#pragma once

#include <cstddef>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bugprobe {

// Execution policy for the data-parallel kernels (batched network updates,
// per-program evaluation, the K independent training loops). The serial path
// is the reference implementation; the OpenMP path must produce identical
// results because every worker writes to its own slot and reductions are
// performed in index order afterwards.
struct ExecPolicy {
    bool use_openmp = true;
    int threads = 0;  // 0 = OpenMP default

    static ExecPolicy serial() { return ExecPolicy{false, 1}; }
    static ExecPolicy openmp(int threads = 0) { return ExecPolicy{true, threads}; }
};

template <typename Fn>
void parallel_for(const ExecPolicy& policy, std::size_t n, Fn&& fn) {
#ifdef _OPENMP
    if (policy.use_openmp && n > 1) {
        const int requested = policy.threads > 0 ? policy.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic) num_threads(requested)
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            fn(static_cast<std::size_t>(i));
        }
        return;
    }
#endif
    (void)policy;
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

inline int hardware_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace bugprobe
