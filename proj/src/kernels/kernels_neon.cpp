// NEON variants of the dense kernels (aarch64 baseline, no extra flags).

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>
#include <cstddef>
#include <cstdint>

namespace dgx::kernels::neon {

double sum(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double r = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) r += x[i];
    return r;
}

double l1_diff(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vaddq_f64(acc, vabdq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    double r = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
    for (; i < n; ++i) r += std::fabs(a[i] - b[i]);
    return r;
}

double max_abs_diff(const double* a, const double* b, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vmaxq_f64(acc, vabdq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    double r = std::max(vgetq_lane_f64(acc, 0), vgetq_lane_f64(acc, 1));
    for (; i < n; ++i) r = std::max(r, std::fabs(a[i] - b[i]));
    return r;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t prod = vmulq_f64(va, vld1q_f64(x + i));
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void add_scaled(const double* x, double a, const double* y, double* out, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t prod = vmulq_f64(va, vld1q_f64(y + i));
        vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), prod));
    }
    for (; i < n; ++i) out[i] = x[i] + a * y[i];
}

void scale(double a, double* x, std::size_t n) {
    float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(va, vld1q_f64(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

void spmv_csr(std::size_t n_rows, const std::int32_t* row_ptr, const std::int32_t* col_idx,
              const double* vals, const double* x, double* y) {
    for (std::size_t r = 0; r < n_rows; ++r) {
        std::int32_t k = row_ptr[r];
        const std::int32_t end = row_ptr[r + 1];
        float64x2_t acc = vdupq_n_f64(0.0);
        for (; k + 2 <= end; k += 2) {
            float64x2_t xs = {x[col_idx[k]], x[col_idx[k + 1]]};
            acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(vals + k), xs));
        }
        double r_acc = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
        for (; k < end; ++k) r_acc += vals[k] * x[col_idx[k]];
        y[r] = r_acc;
    }
}

}  // namespace dgx::kernels::neon

#endif  // __aarch64__
