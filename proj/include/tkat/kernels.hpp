#pragma once

#include <cstdint>

#include <omp.h>

namespace tkat::kernels {

// Switches every kernel between its OpenMP version and the serial
// reference version. Both orderings are bit-identical: parallel kernels
// assign each output element to exactly one thread and keep the inner
// accumulation order fixed, so the switch only changes speed.
void set_parallel(bool enabled);
bool parallel_enabled();

// Work below this many elements stays serial even when parallel is on.
inline constexpr int64_t kMinParallelElems = 4096;
inline constexpr int64_t kMinParallelFlops = 65536;

// Row-major C[m,n] = op(A) * op(B); ta/tb transpose the operand reads.
// With accumulate set, the product is added onto the existing C.
void gemm(const double* a, const double* b, double* c,
          int64_t m, int64_t k, int64_t n, bool ta, bool tb, bool accumulate);
void gemm_serial(const double* a, const double* b, double* c,
                 int64_t m, int64_t k, int64_t n, bool ta, bool tb, bool accumulate);
void gemm_parallel(const double* a, const double* b, double* c,
                   int64_t m, int64_t k, int64_t n, bool ta, bool tb, bool accumulate);

// Batched variant: strides of 0 broadcast an operand across the batch.
void gemm_batched(const double* a, const double* b, double* c, int64_t batch,
                  int64_t m, int64_t k, int64_t n, bool ta, bool tb,
                  int64_t stride_a, int64_t stride_b, int64_t stride_c);

// Numerically stable softmax over contiguous rows of length n.
void softmax_rows(const double* x, double* y, int64_t rows, int64_t n);
void softmax_rows_serial(const double* x, double* y, int64_t rows, int64_t n);

bool all_finite(const double* x, int64_t n);

// Parallel-for over [0, n) when enabled and n is large enough; each index
// is processed by exactly one thread.
template <typename F>
inline void for_each_index(int64_t n, F&& body) {
    if (parallel_enabled() && n >= kMinParallelElems) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) body(i);
    } else {
        for (int64_t i = 0; i < n; ++i) body(i);
    }
}

// Same, but the caller states the per-index cost so small row counts with
// heavy rows still parallelize.
template <typename F>
inline void for_each_index_costed(int64_t n, int64_t flops_per_index, F&& body) {
    if (parallel_enabled() && n > 1 && n * flops_per_index >= kMinParallelFlops) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) body(i);
    } else {
        for (int64_t i = 0; i < n; ++i) body(i);
    }
}

}  // namespace tkat::kernels
