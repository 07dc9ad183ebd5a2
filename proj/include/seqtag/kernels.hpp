// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Dense matmul kernels. Each variant exists twice: an OpenMP-parallel
// version used by the tensor engine and a serial reference kept for tests
// and the benchmark target. The parallel versions split work by output
// row with a serial inner accumulation, so results are bit-identical to
// the serial reference at any thread count.
namespace seqtag::kernels {

// c[m x n] = a[m x k] * b[k x n]
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);

// c[m x n] = a[m x k] * b[n x k]^T
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n);

// c[m x n] += a[k x m]^T * b[k x n]
void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc_serial(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n);

// c[m x n] += a[m x k] * b[k x n]
void matmul_nn_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

// c[m x n] += a[m x k] * b[n x k]^T
void matmul_nt_acc(const double* a, const double* b, double* c,
                   std::size_t m, std::size_t k, std::size_t n);

}  // namespace seqtag::kernels
