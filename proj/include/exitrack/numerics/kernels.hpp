#pragma once

#include <cstddef>
#include <cstdint>

// Dense row-major kernels behind the differentiable ops.
//
// Every kernel exists twice: the OpenMP version used by the ops, and a plain
// serial reference in `serial::` kept for tests and the benchmark. Parallel
// versions split work over output rows only, so each output element is
// reduced by one thread in a fixed order and results do not depend on the
// thread count.
//
// When `accumulate` is true the result is added into `c`; otherwise `c` is
// overwritten.
namespace exitrack::num::kernels {

// c[m,n] (+)= a[m,k] * b[k,n]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// c[m,n] (+)= a[m,k] * b[n,k]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// c[m,n] (+)= a[k,m]^T * b[k,n]
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);

// Numerically stabilised softmax of each row of x[rows, cols] into y.
template <class T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, T* y);

// Per-row normalisation to zero mean / unit variance. Writes the normalised
// values to `xhat` and 1/sqrt(var + eps) per row to `inv_std`.
template <class T>
void normalize_rows(std::size_t rows, std::size_t cols, const T* x, T eps, T* xhat, T* inv_std);

namespace serial {
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate);
template <class T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, T* y);
template <class T>
void normalize_rows(std::size_t rows, std::size_t cols, const T* x, T eps, T* xhat, T* inv_std);
}  // namespace serial

// Multiply-adds issued by the parallel gemm kernels on this thread since the
// last reset. Used to validate the analytic FLOP estimator.
std::uint64_t mac_count() noexcept;
void reset_mac_count() noexcept;

}  // namespace exitrack::num::kernels
