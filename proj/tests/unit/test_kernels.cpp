#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "sae/kernels/kernels.hpp"
#include "sae/rng.hpp"

using namespace sae;
using sae::kernels::KernelTable;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = standard_normal(rng);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// naive triple loop, independent of both tables
std::vector<double> reference_gemm(std::size_t m, std::size_t n, std::size_t k,
                                   const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

std::vector<double> transpose(const std::vector<double>& a, std::size_t rows, std::size_t cols) {
  std::vector<double> t(a.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

void check_table(const KernelTable& t) {
  Rng rng(42);
  // odd sizes exercise the vector remainders
  for (auto [m, n, k] : {std::array<std::size_t, 3>{1, 1, 1}, {3, 5, 7}, {17, 9, 13}, {64, 33, 100}}) {
    const auto a = random_vec(m * k, rng);
    const auto b = random_vec(k * n, rng);
    const auto ref = reference_gemm(m, n, k, a, b);
    std::vector<double> c(m * n, 0.0);
    t.gemm_nn(m, n, k, a.data(), b.data(), c.data(), false);
    CHECK(max_abs_diff(c, ref) < 1e-12);
    t.gemm_nn(m, n, k, a.data(), b.data(), c.data(), true);
    for (double& v : c) v *= 0.5;
    CHECK(max_abs_diff(c, ref) < 1e-12);

    const auto at = transpose(a, m, k);  // k x m
    std::fill(c.begin(), c.end(), 0.0);
    t.gemm_tn(m, n, k, at.data(), b.data(), c.data(), false);
    CHECK(max_abs_diff(c, ref) < 1e-12);

    const auto bt = transpose(b, k, n);  // n x k
    t.gemm_nt(m, n, k, a.data(), bt.data(), c.data(), false);
    CHECK(max_abs_diff(c, ref) < 1e-12);
  }

  const std::size_t n = 37;
  auto x = random_vec(n, rng);
  x[3] = 0.0;
  const auto gy = random_vec(n, rng);
  std::vector<double> y(n), gx(n, 0.0);
  t.elu_forward(n, x.data(), y.data());
  t.elu_backward(n, x.data(), gy.data(), gx.data(), false);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(y[i] == doctest::Approx(x[i] >= 0 ? x[i] : std::expm1(x[i])).epsilon(1e-15));
    CHECK(gx[i] == doctest::Approx(gy[i] * (x[i] >= 0 ? 1.0 : std::exp(x[i]))).epsilon(1e-15));
  }
  CHECK(gx[3] == gy[3]);

  std::vector<double> acc = gy;
  t.axpy(n, 2.5, x.data(), acc.data());
  std::vector<double> prod(n);
  t.mul(n, x.data(), gy.data(), prod.data());
  double dot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(acc[i] == doctest::Approx(gy[i] + 2.5 * x[i]).epsilon(1e-15));
    CHECK(prod[i] == x[i] * gy[i]);
    dot += x[i] * gy[i];
  }
  CHECK(t.dot(n, x.data(), gy.data()) == doctest::Approx(dot).epsilon(1e-13));
}

}  // namespace

TEST_CASE("scalar kernels match naive loops") { check_table(kernels::scalar_table()); }

TEST_CASE("AVX2 kernels match naive loops when available") {
  const KernelTable* t = kernels::avx2_table();
  if (!t) {
    MESSAGE("AVX2 unavailable on this machine; skipped");
    return;
  }
  check_table(*t);
}

TEST_CASE("AVX2 and scalar agree on a decoder-sized product") {
  const KernelTable* t = kernels::avx2_table();
  if (!t) return;
  Rng rng(7);
  const std::size_t m = 256, n = 100, k = 100;
  const auto a = random_vec(m * k, rng);
  const auto b = random_vec(k * n, rng);
  std::vector<double> c1(m * n), c2(m * n);
  kernels::scalar_table().gemm_nn(m, n, k, a.data(), b.data(), c1.data(), false);
  t->gemm_nn(m, n, k, a.data(), b.data(), c2.data(), false);
  CHECK(max_abs_diff(c1, c2) < 1e-11);
}

TEST_CASE("active table is one of the two") {
  const auto& a = kernels::active();
  CHECK((a.name == kernels::scalar_table().name ||
         (kernels::avx2_table() && a.name == kernels::avx2_table()->name)));
}
