#include "exitrack/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace exitrack::num::kernels {

namespace {

thread_local std::uint64_t macs = 0;

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelMacs = 1u << 15;

inline bool go_parallel(std::size_t m, std::size_t n, std::size_t k) { return m * n * k >= kParallelMacs; }

// Register-blocked core shared by all three layouts. A is addressed through
// (row stride, column stride) so a transposed operand needs no copy. B is
// packed into zero-padded column panels of width kNR, so every micro-tile
// runs full-width vector loops. Each output element is still reduced over p
// in increasing order by a single thread.
template <class T>
constexpr std::size_t kNR = 128 / sizeof(T);
constexpr std::size_t kMR = 4;

template <class T>
const T* pack_panels(std::size_t n, std::size_t k, const T* b, std::size_t b_row, std::size_t b_col) {
  thread_local std::vector<T> buffer;
  constexpr std::size_t nr = kNR<T>;
  const std::size_t panels = (n + nr - 1) / nr;
  buffer.assign(panels * k * nr, T(0));
  for (std::size_t jp = 0; jp < panels; ++jp) {
    const std::size_t width = std::min(nr, n - jp * nr);
    T* dst = buffer.data() + jp * k * nr;
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t jj = 0; jj < width; ++jj) dst[p * nr + jj] = b[p * b_row + (jp * nr + jj) * b_col];
  }
  return buffer.data();
}

template <class T, std::size_t MR>
inline void micro_tile(std::size_t k, const T* a, std::size_t a_row, std::size_t a_col, const T* panel, T* c,
                       std::size_t ldc, std::size_t width, bool accumulate) {
  constexpr std::size_t nr = kNR<T>;
  T acc[MR][nr] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const T* bp = panel + p * nr;
    for (std::size_t r = 0; r < MR; ++r) {
      const T ar = a[r * a_row + p * a_col];
#pragma omp simd
      for (std::size_t j = 0; j < nr; ++j) acc[r][j] += ar * bp[j];
    }
  }
  for (std::size_t r = 0; r < MR; ++r) {
    T* cr = c + r * ldc;
    if (accumulate)
      for (std::size_t j = 0; j < width; ++j) cr[j] += acc[r][j];
    else
      for (std::size_t j = 0; j < width; ++j) cr[j] = acc[r][j];
  }
}

template <class T>
void blocked_gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t a_row, std::size_t a_col,
                  const T* b, std::size_t b_row, std::size_t b_col, T* c, bool accumulate) {
  macs += static_cast<std::uint64_t>(m) * n * k;
  if (m == 0 || n == 0) return;
  constexpr std::size_t nr = kNR<T>;
  const T* packed = pack_panels(n, k, b, b_row, b_col);
  const std::size_t panels = (n + nr - 1) / nr;
  const auto blocks = static_cast<std::ptrdiff_t>((m + kMR - 1) / kMR);
#pragma omp parallel for schedule(static) if (go_parallel(m, n, k))
  for (std::ptrdiff_t ib = 0; ib < blocks; ++ib) {
    const std::size_t i0 = static_cast<std::size_t>(ib) * kMR;
    const std::size_t rows = std::min(kMR, m - i0);
    for (std::size_t jp = 0; jp < panels; ++jp) {
      const std::size_t j0 = jp * nr;
      const std::size_t width = std::min(nr, n - j0);
      const T* panel = packed + jp * k * nr;
      T* ct = c + i0 * n + j0;
      if (rows == kMR) {
        micro_tile<T, kMR>(k, a + i0 * a_row, a_row, a_col, panel, ct, n, width, accumulate);
      } else {
        for (std::size_t r = 0; r < rows; ++r)
          micro_tile<T, 1>(k, a + (i0 + r) * a_row, a_row, a_col, panel, ct + r * n, n, width, accumulate);
      }
    }
  }
}

}  // namespace

std::uint64_t mac_count() noexcept { return macs; }
void reset_mac_count() noexcept { macs = 0; }

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  blocked_gemm(m, n, k, a, k, 1, b, n, 1, c, accumulate);
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  blocked_gemm(m, n, k, a, k, 1, b, 1, k, c, accumulate);
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  blocked_gemm(m, n, k, a, 1, m, b, n, 1, c, accumulate);
}

template <class T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, T* y) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelMacs)
  for (std::ptrdiff_t i = 0; i < r; ++i) {
    const T* xi = x + i * cols;
    T* yi = y + i * cols;
    const T hi = *std::max_element(xi, xi + cols);
#pragma omp simd
    for (std::size_t j = 0; j < cols; ++j) yi[j] = std::exp(xi[j] - hi);
    T total = T(0);
    for (std::size_t j = 0; j < cols; ++j) total += yi[j];
    const T inv = T(1) / total;
    for (std::size_t j = 0; j < cols; ++j) yi[j] *= inv;
  }
}

template <class T>
void normalize_rows(std::size_t rows, std::size_t cols, const T* x, T eps, T* xhat, T* inv_std) {
  const auto r = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelMacs)
  for (std::ptrdiff_t i = 0; i < r; ++i) {
    const T* xi = x + i * cols;
    T mean = T(0);
    for (std::size_t j = 0; j < cols; ++j) mean += xi[j];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t j = 0; j < cols; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<T>(cols);
    const T inv = T(1) / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (std::size_t j = 0; j < cols; ++j) xhat[i * cols + j] = (xi[j] - mean) * inv;
  }
}

namespace serial {

template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
}

template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
}

template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + acc : acc;
    }
}

template <class T>
void softmax_rows(std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    T hi = x[i * cols];
    for (std::size_t j = 1; j < cols; ++j) hi = std::max(hi, x[i * cols + j]);
    T total = T(0);
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(x[i * cols + j] - hi);
    for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = std::exp(x[i * cols + j] - hi) / total;
  }
}

template <class T>
void normalize_rows(std::size_t rows, std::size_t cols, const T* x, T eps, T* xhat, T* inv_std) {
  for (std::size_t i = 0; i < rows; ++i) {
    T mean = T(0);
    for (std::size_t j = 0; j < cols; ++j) mean += x[i * cols + j];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t j = 0; j < cols; ++j) var += (x[i * cols + j] - mean) * (x[i * cols + j] - mean);
    var /= static_cast<T>(cols);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) xhat[i * cols + j] = (x[i * cols + j] - mean) * inv_std[i];
  }
}

}  // namespace serial

#define EXITRACK_INSTANTIATE_KERNELS(T)                                                                        \
  template void gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);              \
  template void gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);              \
  template void gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);              \
  template void softmax_rows<T>(std::size_t, std::size_t, const T*, T*);                                      \
  template void normalize_rows<T>(std::size_t, std::size_t, const T*, T, T*, T*);                             \
  template void serial::gemm_nn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);      \
  template void serial::gemm_nt<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);      \
  template void serial::gemm_tn<T>(std::size_t, std::size_t, std::size_t, const T*, const T*, T*, bool);      \
  template void serial::softmax_rows<T>(std::size_t, std::size_t, const T*, T*);                              \
  template void serial::normalize_rows<T>(std::size_t, std::size_t, const T*, T, T*, T*);

EXITRACK_INSTANTIATE_KERNELS(float)
EXITRACK_INSTANTIATE_KERNELS(double)

#undef EXITRACK_INSTANTIATE_KERNELS

}  // namespace exitrack::num::kernels
