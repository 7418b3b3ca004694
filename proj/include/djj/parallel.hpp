#pragma once
// OpenMP helpers.  Every parallel loop here writes to disjoint,
// index-addressed slots, so results are bitwise independent of the
// schedule and thread count.

#include <exception>

#include <omp.h>

namespace djj {

inline void set_thread_count(int n) {
    if (n > 0) omp_set_num_threads(n);
}

inline int thread_count() { return omp_get_max_threads(); }

// Serial twin, kept as the reference implementation for testing.
template <class F>
void for_each_index_serial(long n, F&& f) {
    for (long i = 0; i < n; ++i) f(i);
}

template <class F>
void for_each_index_parallel(long n, F&& f) {
    std::exception_ptr err = nullptr;
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        try {
            f(i);
        } catch (...) {
#pragma omp critical
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

template <class F>
void for_each_index(long n, bool parallel, F&& f) {
    if (parallel) for_each_index_parallel(n, f);
    else          for_each_index_serial(n, f);
}

} // namespace djj
