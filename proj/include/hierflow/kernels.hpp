#pragma once

#include <cstddef>

namespace hierflow::kernels {

// Dense row-major matrix products. The serial versions are the reference
// implementations; the default entry points parallelize over output rows
// with OpenMP. Each output element is reduced serially in a fixed order,
// so parallel and serial results are bit-identical.

// C[m x n] += A[m x k] * B[k x n]
void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

// C[m x n] += A[k x m]^T * B[k x n]
void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

// C[m x n] += A[m x k] * B[n x k]^T
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

}  // namespace hierflow::kernels
