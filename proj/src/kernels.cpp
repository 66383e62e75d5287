#include "hierflow/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hierflow::kernels {

namespace {
// Parallelizing tiny products costs more than it saves.
constexpr std::size_t kParallelThreshold = 64 * 1024;
}  // namespace

void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m * k * n >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            double* crow = c + i * n;
            const double* arow = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return;
    }
#endif
    matmul_nn_serial(a, b, c, m, k, n);
}

void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m * k * n >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            double* crow = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a[p * m + i];
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return;
    }
#endif
    matmul_tn_serial(a, b, c, m, k, n);
}

void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m * k * n >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long ii = 0; ii < static_cast<long long>(m); ++ii) {
            const std::size_t i = static_cast<std::size_t>(ii);
            const double* arow = a + i * k;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = b + j * k;
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
                crow[j] += acc;
            }
        }
        return;
    }
#endif
    matmul_nt_serial(a, b, c, m, k, n);
}

}  // namespace hierflow::kernels
