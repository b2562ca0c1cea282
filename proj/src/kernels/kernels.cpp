#include "dgx/kernels.hpp"

#include <cmath>
#include <cstdlib>

namespace dgx::kernels {

namespace scalar {

double sum(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double l1_diff(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::fabs(a[i] - b[i]);
    return acc;
}

double max_abs_diff(const double* a, const double* b, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_scaled(const double* x, double a, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + a * y[i];
}

void scale(double a, double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

void spmv_csr(std::size_t n_rows, const std::int32_t* row_ptr, const std::int32_t* col_idx,
              const double* vals, const double* x, double* y) {
    for (std::size_t r = 0; r < n_rows; ++r) {
        double acc = 0.0;
        for (std::int32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            acc += vals[k] * x[col_idx[k]];
        y[r] = acc;
    }
}

}  // namespace scalar

#if defined(__x86_64__)
namespace avx2 {
double sum(const double* x, std::size_t n);
double l1_diff(const double* a, const double* b, std::size_t n);
double max_abs_diff(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void add_scaled(const double* x, double a, const double* y, double* out, std::size_t n);
void scale(double a, double* x, std::size_t n);
void spmv_csr(std::size_t n_rows, const std::int32_t* row_ptr, const std::int32_t* col_idx,
              const double* vals, const double* x, double* y);
}  // namespace avx2
#endif

#if defined(__aarch64__)
namespace neon {
double sum(const double* x, std::size_t n);
double l1_diff(const double* a, const double* b, std::size_t n);
double max_abs_diff(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void add_scaled(const double* x, double a, const double* y, double* out, std::size_t n);
void scale(double a, double* x, std::size_t n);
void spmv_csr(std::size_t n_rows, const std::int32_t* row_ptr, const std::int32_t* col_idx,
              const double* vals, const double* x, double* y);
}  // namespace neon
#endif

namespace {

enum class Backend { Scalar, Avx2, Neon };

Backend pick_backend() {
    const char* off = std::getenv("DGX_NO_SIMD");
    if (off && off[0] != '\0' && off[0] != '0') return Backend::Scalar;
#if defined(__x86_64__)
    if (__builtin_cpu_supports("avx2")) return Backend::Avx2;
#elif defined(__aarch64__)
    return Backend::Neon;
#endif
    return Backend::Scalar;
}

const Backend g_backend = pick_backend();

template <typename Fn>
Fn select(Fn sc, Fn x86, Fn arm) {
    switch (g_backend) {
        case Backend::Avx2: return x86 ? x86 : sc;
        case Backend::Neon: return arm ? arm : sc;
        case Backend::Scalar: break;
    }
    return sc;
}

#if defined(__x86_64__)
#define DGX_AVX2(f) &avx2::f
#else
#define DGX_AVX2(f) nullptr
#endif
#if defined(__aarch64__)
#define DGX_NEON(f) &neon::f
#else
#define DGX_NEON(f) nullptr
#endif

}  // namespace

SumFn sum = select<SumFn>(&scalar::sum, DGX_AVX2(sum), DGX_NEON(sum));
DiffReduceFn l1_diff = select<DiffReduceFn>(&scalar::l1_diff, DGX_AVX2(l1_diff), DGX_NEON(l1_diff));
DiffReduceFn max_abs_diff =
    select<DiffReduceFn>(&scalar::max_abs_diff, DGX_AVX2(max_abs_diff), DGX_NEON(max_abs_diff));
AxpyFn axpy = select<AxpyFn>(&scalar::axpy, DGX_AVX2(axpy), DGX_NEON(axpy));
AddScaledFn add_scaled =
    select<AddScaledFn>(&scalar::add_scaled, DGX_AVX2(add_scaled), DGX_NEON(add_scaled));
ScaleFn scale = select<ScaleFn>(&scalar::scale, DGX_AVX2(scale), DGX_NEON(scale));
SpmvFn spmv_csr = select<SpmvFn>(&scalar::spmv_csr, DGX_AVX2(spmv_csr), DGX_NEON(spmv_csr));

const char* active_backend() {
    switch (g_backend) {
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
        case Backend::Scalar: break;
    }
    return "scalar";
}

}  // namespace dgx::kernels
