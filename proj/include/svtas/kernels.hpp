#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision inner loops used by the tensor core. Every routine has
// a portable scalar reference and an AVX2/FMA variant; the active table is
// chosen once at startup from the CPU feature bits (override with the
// SVTAS_KERNELS=scalar|avx2 environment variable).
namespace svtas::kernels {

struct KernelTable {
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = a[i] * b[i]
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] += a[i] * b[i]
  void (*mul_acc)(const double* a, const double* b, double* out, std::size_t n);
  // C[m,n] += A[m,k] * B[k,n]      (all row-major, contiguous)
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m,n] += A[m,k] * B[n,k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c);
};

const KernelTable& scalar_table();

// nullptr when the build has no AVX2 variant or the CPU lacks avx2+fma.
const KernelTable* avx2_table();

// The table all tensor kernels dispatch through.
const KernelTable& active();

// Force a table by name ("scalar" or "avx2"); returns false if unavailable.
bool select(std::string_view name);

}  // namespace svtas::kernels
