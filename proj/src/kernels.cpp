#include "tkat/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace tkat::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

// One output row of op(A)*op(B). Every variant accumulates each C[i,j]
// in increasing-k order so serial and parallel runs agree bitwise.
static inline void gemm_row(const double* a, const double* b, double* crow,
                            int64_t i, int64_t m, int64_t k, int64_t n,
                            bool ta, bool tb, bool accumulate) {
    (void)m;
    if (!accumulate) {
        for (int64_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
    if (!ta && !tb) {
        const double* arow = a + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    } else if (!ta && tb) {
        const double* arow = a + i * k;
        for (int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = crow[j];
            for (int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = acc;
        }
    } else if (ta && !tb) {
        for (int64_t kk = 0; kk < k; ++kk) {
            const double av = a[kk * m + i];
            const double* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    } else {
        for (int64_t j = 0; j < n; ++j) {
            double acc = crow[j];
            for (int64_t kk = 0; kk < k; ++kk) acc += a[kk * m + i] * b[j * k + kk];
            crow[j] = acc;
        }
    }
}

void gemm_serial(const double* a, const double* b, double* c,
                 int64_t m, int64_t k, int64_t n, bool ta, bool tb, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) gemm_row(a, b, c + i * n, i, m, k, n, ta, tb, accumulate);
}

void gemm_parallel(const double* a, const double* b, double* c,
                   int64_t m, int64_t k, int64_t n, bool ta, bool tb, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < m; ++i) gemm_row(a, b, c + i * n, i, m, k, n, ta, tb, accumulate);
}

void gemm(const double* a, const double* b, double* c,
          int64_t m, int64_t k, int64_t n, bool ta, bool tb, bool accumulate) {
    if (parallel_enabled() && m > 1 && m * n * k >= kMinParallelFlops) {
        gemm_parallel(a, b, c, m, k, n, ta, tb, accumulate);
    } else {
        gemm_serial(a, b, c, m, k, n, ta, tb, accumulate);
    }
}

void gemm_batched(const double* a, const double* b, double* c, int64_t batch,
                  int64_t m, int64_t k, int64_t n, bool ta, bool tb,
                  int64_t stride_a, int64_t stride_b, int64_t stride_c) {
    const int64_t rows = batch * m;
    if (parallel_enabled() && rows > 1 && rows * n * k >= kMinParallelFlops) {
#pragma omp parallel for schedule(static) collapse(2)
        for (int64_t bi = 0; bi < batch; ++bi) {
            for (int64_t i = 0; i < m; ++i) {
                gemm_row(a + bi * stride_a, b + bi * stride_b, c + bi * stride_c + i * n,
                         i, m, k, n, ta, tb, false);
            }
        }
    } else {
        for (int64_t bi = 0; bi < batch; ++bi) {
            for (int64_t i = 0; i < m; ++i) {
                gemm_row(a + bi * stride_a, b + bi * stride_b, c + bi * stride_c + i * n,
                         i, m, k, n, ta, tb, false);
            }
        }
    }
}

static inline void softmax_row(const double* x, double* y, int64_t n) {
    double mx = x[0];
    for (int64_t j = 1; j < n; ++j) mx = x[j] > mx ? x[j] : mx;
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - mx);
        s += y[j];
    }
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < n; ++j) y[j] *= inv;
}

void softmax_rows_serial(const double* x, double* y, int64_t rows, int64_t n) {
    for (int64_t r = 0; r < rows; ++r) softmax_row(x + r * n, y + r * n, n);
}

void softmax_rows(const double* x, double* y, int64_t rows, int64_t n) {
    if (parallel_enabled() && rows > 1 && rows * n >= kMinParallelElems) {
#pragma omp parallel for schedule(static)
        for (int64_t r = 0; r < rows; ++r) softmax_row(x + r * n, y + r * n, n);
    } else {
        softmax_rows_serial(x, y, rows, n);
    }
}

bool all_finite(const double* x, int64_t n) {
    if (parallel_enabled() && n >= kMinParallelElems) {
        bool ok = true;
#pragma omp parallel for schedule(static) reduction(&& : ok)
        for (int64_t i = 0; i < n; ++i) ok = ok && std::isfinite(x[i]);
        return ok;
    }
    for (int64_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

}  // namespace tkat::kernels
