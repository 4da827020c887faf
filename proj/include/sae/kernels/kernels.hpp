#pragma once

// Dense inner-loop kernels behind the autodiff engine and the decoder.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2/FMA variant. The active table is picked once at startup from CPUID;
// setting SAE_KERNELS=scalar in the environment forces the reference path.
// All matrices are dense row-major with explicit leading dimensions equal to
// their column counts.

#include <cstddef>
#include <string_view>

namespace sae::kernels {

struct KernelTable {
  std::string_view name;
  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  // C[m x n] (+)= A^T * B where A is [k x m], B is [k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  // C[m x n] (+)= A * B^T where A is [m x k], B is [n x k]
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  // y = elu(x)
  void (*elu_forward)(std::size_t n, const double* x, double* y);
  // gx (+)= gy * elu'(x), with elu'(0) = 1
  void (*elu_backward)(std::size_t n, const double* x, const double* gy, double* gx,
                       bool accumulate);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // z = x * y elementwise
  void (*mul)(std::size_t n, const double* x, const double* y, double* z);
  double (*dot)(std::size_t n, const double* x, const double* y);
};

const KernelTable& scalar_table() noexcept;

/// AVX2/FMA table, or nullptr when the build or the CPU lacks support.
const KernelTable* avx2_table() noexcept;

/// The table selected for this process.
const KernelTable& active() noexcept;

}  // namespace sae::kernels
