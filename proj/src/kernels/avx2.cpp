#include "sae/kernels/kernels.hpp"

#if defined(SAE_HAVE_AVX2_TU)

#include <immintrin.h>

#include <cmath>

namespace sae::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// C rows i0 (and i0+1 when two_rows) over columns [j0, j0+16): acc = C or 0,
// then acc += a[i, p] * B[p, j0:j0+16] for all p.
template <bool TransA>
inline void block_2x16(std::size_t i0, bool two_rows, std::size_t j0, std::size_t m,
                       std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                       bool accumulate) {
  __m256d c00, c01, c02, c03, c10, c11, c12, c13;
  double* r0 = c + i0 * n + j0;
  double* r1 = two_rows ? r0 + n : r0;
  if (accumulate) {
    c00 = _mm256_loadu_pd(r0);
    c01 = _mm256_loadu_pd(r0 + 4);
    c02 = _mm256_loadu_pd(r0 + 8);
    c03 = _mm256_loadu_pd(r0 + 12);
    c10 = _mm256_loadu_pd(r1);
    c11 = _mm256_loadu_pd(r1 + 4);
    c12 = _mm256_loadu_pd(r1 + 8);
    c13 = _mm256_loadu_pd(r1 + 12);
  } else {
    c00 = c01 = c02 = c03 = c10 = c11 = c12 = c13 = _mm256_setzero_pd();
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n + j0;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    const __m256d b2 = _mm256_loadu_pd(brow + 8);
    const __m256d b3 = _mm256_loadu_pd(brow + 12);
    const double a0v = TransA ? a[p * m + i0] : a[i0 * k + p];
    const __m256d a0 = _mm256_broadcast_sd(&a0v);
    c00 = _mm256_fmadd_pd(a0, b0, c00);
    c01 = _mm256_fmadd_pd(a0, b1, c01);
    c02 = _mm256_fmadd_pd(a0, b2, c02);
    c03 = _mm256_fmadd_pd(a0, b3, c03);
    if (two_rows) {
      const double a1v = TransA ? a[p * m + i0 + 1] : a[(i0 + 1) * k + p];
      const __m256d a1 = _mm256_broadcast_sd(&a1v);
      c10 = _mm256_fmadd_pd(a1, b0, c10);
      c11 = _mm256_fmadd_pd(a1, b1, c11);
      c12 = _mm256_fmadd_pd(a1, b2, c12);
      c13 = _mm256_fmadd_pd(a1, b3, c13);
    }
  }
  _mm256_storeu_pd(r0, c00);
  _mm256_storeu_pd(r0 + 4, c01);
  _mm256_storeu_pd(r0 + 8, c02);
  _mm256_storeu_pd(r0 + 12, c03);
  if (two_rows) {
    _mm256_storeu_pd(r1, c10);
    _mm256_storeu_pd(r1 + 4, c11);
    _mm256_storeu_pd(r1 + 8, c12);
    _mm256_storeu_pd(r1 + 12, c13);
  }
}

template <bool TransA>
inline void row_tail(std::size_t i, std::size_t j0, std::size_t m, std::size_t n, std::size_t k,
                     const double* a, const double* b, double* c, bool accumulate) {
  double* crow = c + i * n;
  std::size_t j = j0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = accumulate ? _mm256_loadu_pd(crow + j) : _mm256_setzero_pd();
    for (std::size_t p = 0; p < k; ++p) {
      const double av = TransA ? a[p * m + i] : a[i * k + p];
      acc = _mm256_fmadd_pd(_mm256_set1_pd(av), _mm256_loadu_pd(b + p * n + j), acc);
    }
    _mm256_storeu_pd(crow + j, acc);
  }
  for (; j < n; ++j) {
    double s = accumulate ? crow[j] : 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = TransA ? a[p * m + i] : a[i * k + p];
      s = std::fma(av, b[p * n + j], s);
    }
    crow[j] = s;
  }
}

template <bool TransA>
void gemm_rows(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c, bool accumulate) {
  const std::size_t n16 = n - n % 16;
  std::size_t i = 0;
  for (; i < m; i += 2) {
    const bool two = i + 1 < m;
    for (std::size_t j = 0; j < n16; j += 16) {
      block_2x16<TransA>(i, two, j, m, n, k, a, b, c, accumulate);
    }
    row_tail<TransA>(i, n16, m, n, k, a, b, c, accumulate);
    if (two) row_tail<TransA>(i + 1, n16, m, n, k, a, b, c, accumulate);
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm_rows<false>(m, n, k, a, b, c, accumulate);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  gemm_rows<true>(m, n, k, a, b, c, accumulate);
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d av = _mm256_loadu_pd(arow + p);
        s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
      }
      double t[4] = {hsum(s0), hsum(s1), hsum(s2), hsum(s3)};
      for (; p < k; ++p) {
        t[0] = std::fma(arow[p], b0[p], t[0]);
        t[1] = std::fma(arow[p], b1[p], t[1]);
        t[2] = std::fma(arow[p], b2[p], t[2]);
        t[3] = std::fma(arow[p], b3[p], t[3]);
      }
      double* crow = c + i * n + j;
      for (int q = 0; q < 4; ++q) crow[q] = accumulate ? crow[q] + t[q] : t[q];
    }
    for (; j < n; ++j) {
      const double s = dot(k, arow, b + j * k);
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

// Positive lanes are handled in registers; lanes with negative inputs fall
// back to libm so results match the scalar reference bit for bit.
void elu_forward(std::size_t n, const double* x, double* y) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const int neg = _mm256_movemask_pd(_mm256_cmp_pd(v, zero, _CMP_LT_OQ));
    _mm256_storeu_pd(y + i, v);
    if (neg != 0) {
      for (int q = 0; q < 4; ++q) {
        if (neg & (1 << q)) y[i + q] = std::expm1(x[i + q]);
      }
    }
  }
  for (; i < n; ++i) y[i] = x[i] >= 0.0 ? x[i] : std::expm1(x[i]);
}

void elu_backward(std::size_t n, const double* x, const double* gy, double* gx, bool accumulate) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const int neg = _mm256_movemask_pd(_mm256_cmp_pd(v, zero, _CMP_LT_OQ));
    alignas(32) double d[4];
    _mm256_store_pd(d, _mm256_loadu_pd(gy + i));
    if (neg != 0) {
      for (int q = 0; q < 4; ++q) {
        if (neg & (1 << q)) d[q] = gy[i + q] * std::exp(x[i + q]);
      }
    }
    const __m256d dv = _mm256_load_pd(d);
    if (accumulate) {
      _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), dv));
    } else {
      _mm256_storeu_pd(gx + i, dv);
    }
  }
  for (; i < n; ++i) {
    const double d = x[i] >= 0.0 ? gy[i] : gy[i] * std::exp(x[i]);
    gx[i] = accumulate ? gx[i] + d : d;
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void mul(std::size_t n, const double* x, const double* y, double* z) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) z[i] = x[i] * y[i];
}

}  // namespace

const KernelTable* avx2_table() noexcept {
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  static const KernelTable table{"avx2", gemm_nn, gemm_tn, gemm_nt, elu_forward,
                                 elu_backward, axpy, mul, dot};
  return supported ? &table : nullptr;
}

}  // namespace sae::kernels

#else

namespace sae::kernels {
const KernelTable* avx2_table() noexcept { return nullptr; }
}  // namespace sae::kernels

#endif
