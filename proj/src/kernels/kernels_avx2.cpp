// AVX2 variants of the dense kernels. Compiled with -mavx2 (no FMA, so the
// element-wise kernels round exactly like the scalar reference). This file is
// only built on x86-64; dispatch happens in kernels.cpp.

#if defined(__x86_64__)

#include <immintrin.h>

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace dgx::kernels::avx2 {

namespace {
inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

inline double hmax(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_max_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_max_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

const __m256d kAbsMask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFLL));
}  // namespace

double sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double l1_diff(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_add_pd(acc, _mm256_and_pd(d, kAbsMask));
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += std::fabs(a[i] - b[i]);
    return r;
}

double max_abs_diff(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_max_pd(acc, _mm256_and_pd(d, kAbsMask));
    }
    double r = hmax(acc);
    for (; i < n; ++i) r = std::max(r, std::fabs(a[i] - b[i]));
    return r;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void add_scaled(const double* x, double a, const double* y, double* out, std::size_t n) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), prod));
    }
    for (; i < n; ++i) out[i] = x[i] + a * y[i];
}

void scale(double a, double* x, std::size_t n) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void spmv_csr(std::size_t n_rows, const std::int32_t* row_ptr, const std::int32_t* col_idx,
              const double* vals, const double* x, double* y) {
    for (std::size_t r = 0; r < n_rows; ++r) {
        std::int32_t k = row_ptr[r];
        const std::int32_t end = row_ptr[r + 1];
        __m256d acc = _mm256_setzero_pd();
        for (; k + 4 <= end; k += 4) {
            __m128i idx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(col_idx + k));
            __m256d xs = _mm256_i32gather_pd(x, idx, 8);
            acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(vals + k), xs));
        }
        double r_acc = hsum(acc);
        for (; k < end; ++k) r_acc += vals[k] * x[col_idx[k]];
        y[r] = r_acc;
    }
}

}  // namespace dgx::kernels::avx2

#endif  // __x86_64__
