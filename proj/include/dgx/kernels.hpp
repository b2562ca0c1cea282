#pragma once

#include <cstddef>
#include <cstdint>

namespace dgx::kernels {

// Dense vector kernels used by the uniformization solver and by distribution
// comparisons. Each has a scalar reference implementation plus SIMD variants
// (AVX2 on x86-64, NEON on aarch64); the active backend is chosen once at
// startup from CPU capabilities. Setting DGX_NO_SIMD=1 in the environment
// forces the scalar path.
//
// Element-wise kernels (axpy, add_scaled, scale) are bit-identical across
// backends; reductions (sum, l1_diff, max_abs_diff) and spmv may differ from
// the scalar reference only by floating-point association order.

using SumFn = double (*)(const double*, std::size_t);
using DiffReduceFn = double (*)(const double*, const double*, std::size_t);
using AxpyFn = void (*)(double, const double*, double*, std::size_t);
using AddScaledFn = void (*)(const double*, double, const double*, double*, std::size_t);
using ScaleFn = void (*)(double, double*, std::size_t);
using SpmvFn = void (*)(std::size_t, const std::int32_t*, const std::int32_t*, const double*,
                        const double*, double*);

extern SumFn sum;                   // sum_i x[i]
extern DiffReduceFn l1_diff;        // sum_i |a[i] - b[i]|
extern DiffReduceFn max_abs_diff;   // max_i |a[i] - b[i]|
extern AxpyFn axpy;                 // y += a*x
extern AddScaledFn add_scaled;      // out = x + a*y
extern ScaleFn scale;               // x *= a
extern SpmvFn spmv_csr;             // y = A*x, CSR (row_ptr, col_idx, vals)

// Total variation distance between two distributions of equal length.
inline double tv_distance(const double* p, const double* q, std::size_t n) {
    return 0.5 * l1_diff(p, q, n);
}

const char* active_backend();  // "scalar", "avx2", or "neon"

namespace scalar {
double sum(const double* x, std::size_t n);
double l1_diff(const double* a, const double* b, std::size_t n);
double max_abs_diff(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void add_scaled(const double* x, double a, const double* y, double* out, std::size_t n);
void scale(double a, double* x, std::size_t n);
void spmv_csr(std::size_t n_rows, const std::int32_t* row_ptr, const std::int32_t* col_idx,
              const double* vals, const double* x, double* y);
}  // namespace scalar

}  // namespace dgx::kernels
