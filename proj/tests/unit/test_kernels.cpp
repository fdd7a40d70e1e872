#include <vector>

#include "doctest.h"
#include "svtas/kernels.hpp"
#include "svtas/random.hpp"

using namespace svtas;

namespace {

std::vector<double> noise(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

void close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol).scale(1.0));
}

}  // namespace

TEST_CASE("scalar table matches naive loops") {
  const auto& k = kernels::scalar_table();
  Rng rng(1);
  const auto a = noise(rng, 7), b = noise(rng, 7);
  double d = 0.0;
  for (int i = 0; i < 7; ++i) d += a[i] * b[i];
  CHECK(k.dot(a.data(), b.data(), 7) == doctest::Approx(d).epsilon(1e-14));
  // 2x3 * 3x2
  const std::vector<double> m{1, 2, 3, 4, 5, 6}, n{7, 8, 9, 10, 11, 12};
  std::vector<double> c(4, 0.0);
  k.gemm_nn(2, 2, 3, m.data(), n.data(), c.data());
  CHECK(c == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  const kernels::KernelTable* fast = kernels::avx2_table();
  if (!fast) {
    MESSAGE("no AVX2 on this machine; skipping");
    return;
  }
  const auto& ref = kernels::scalar_table();
  Rng rng(99);
  for (std::size_t n : {0, 1, 3, 4, 5, 8, 13, 31, 64, 257}) {
    const auto a = noise(rng, n), b = noise(rng, n);
    CHECK(fast->dot(a.data(), b.data(), n) == doctest::Approx(ref.dot(a.data(), b.data(), n)).epsilon(1e-12).scale(1.0));
    auto y1 = noise(rng, n), y2 = y1;
    ref.axpy(0.3, a.data(), y1.data(), n);
    fast->axpy(0.3, a.data(), y2.data(), n);
    close(y1, y2, 1e-14);
    std::vector<double> o1(n), o2(n);
    ref.mul(a.data(), b.data(), o1.data(), n);
    fast->mul(a.data(), b.data(), o2.data(), n);
    CHECK(o1 == o2);
    ref.mul_acc(a.data(), b.data(), o1.data(), n);
    fast->mul_acc(a.data(), b.data(), o2.data(), n);
    close(o1, o2, 1e-14);
  }
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t m = 1 + rng.uniform_int(0, 17), n = 1 + rng.uniform_int(0, 17), k = 1 + rng.uniform_int(0, 17);
    const auto a = noise(rng, m * k), b = noise(rng, k * n), bt = noise(rng, n * k), at = noise(rng, k * m);
    auto c0 = noise(rng, m * n);
    for (auto fn : {&kernels::KernelTable::gemm_nn, &kernels::KernelTable::gemm_nt, &kernels::KernelTable::gemm_tn}) {
      const double* lhs = fn == &kernels::KernelTable::gemm_tn ? at.data() : a.data();
      const double* rhs = fn == &kernels::KernelTable::gemm_nt ? bt.data() : b.data();
      auto c1 = c0, c2 = c0;
      (ref.*fn)(m, n, k, lhs, rhs, c1.data());
      (fast->*fn)(m, n, k, lhs, rhs, c2.data());
      close(c1, c2, 1e-12);
    }
  }
}

TEST_CASE("kernel selection by name") {
  const std::string before(kernels::active().name);
  CHECK(kernels::select("scalar"));
  CHECK(kernels::active().name == "scalar");
  CHECK_FALSE(kernels::select("sse9"));
  if (kernels::avx2_table()) {
    CHECK(kernels::select("avx2"));
    CHECK(kernels::active().name == "avx2");
  }
  kernels::select(before);
}
