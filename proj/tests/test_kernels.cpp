#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "dgx/kernels.hpp"

namespace k = dgx::kernels;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
    std::uniform_real_distribution<double> d(-scale, scale);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

}  // namespace

TEST_CASE("elementwise kernels match the scalar reference bit for bit") {
    std::mt19937_64 rng(7);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 64u, 1001u}) {
        auto x = random_vec(rng, n);
        auto y = random_vec(rng, n);
        double a = 0.37;

        auto y_ref = y;
        k::scalar::axpy(a, x.data(), y_ref.data(), n);
        auto y_simd = y;
        k::axpy(a, x.data(), y_simd.data(), n);
        CHECK(y_ref == y_simd);

        std::vector<double> out_ref(n), out_simd(n);
        k::scalar::add_scaled(x.data(), a, y.data(), out_ref.data(), n);
        k::add_scaled(x.data(), a, y.data(), out_simd.data(), n);
        CHECK(out_ref == out_simd);

        auto s_ref = x;
        k::scalar::scale(a, s_ref.data(), n);
        auto s_simd = x;
        k::scale(a, s_simd.data(), n);
        CHECK(s_ref == s_simd);
    }
}

TEST_CASE("reduction kernels agree with the scalar reference to rounding") {
    std::mt19937_64 rng(8);
    for (std::size_t n : {1u, 5u, 128u, 4097u}) {
        auto x = random_vec(rng, n);
        auto y = random_vec(rng, n);
        double tol = 1e-12 * static_cast<double>(n);

        CHECK(k::sum(x.data(), n) == doctest::Approx(k::scalar::sum(x.data(), n)).epsilon(tol));
        CHECK(k::l1_diff(x.data(), y.data(), n) ==
              doctest::Approx(k::scalar::l1_diff(x.data(), y.data(), n)).epsilon(tol));
        // max is order-independent, so it must be exact.
        CHECK(k::max_abs_diff(x.data(), y.data(), n) ==
              k::scalar::max_abs_diff(x.data(), y.data(), n));
    }
}

TEST_CASE("spmv_csr agrees with the scalar reference") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> dv(-2.0, 2.0);
    std::uniform_int_distribution<int> dn(0, 11);
    const std::size_t n = 97;
    std::vector<std::int32_t> row_ptr{0};
    std::vector<std::int32_t> col_idx;
    std::vector<double> vals;
    for (std::size_t r = 0; r < n; ++r) {
        int nnz = dn(rng);
        for (int j = 0; j < nnz; ++j) {
            col_idx.push_back(static_cast<std::int32_t>(rng() % n));
            vals.push_back(dv(rng));
        }
        row_ptr.push_back(static_cast<std::int32_t>(col_idx.size()));
    }
    auto x = random_vec(rng, n);
    std::vector<double> y_ref(n), y_simd(n);
    k::scalar::spmv_csr(n, row_ptr.data(), col_idx.data(), vals.data(), x.data(), y_ref.data());
    k::spmv_csr(n, row_ptr.data(), col_idx.data(), vals.data(), x.data(), y_simd.data());
    for (std::size_t i = 0; i < n; ++i)
        CHECK(y_simd[i] == doctest::Approx(y_ref[i]).epsilon(1e-12));
}

TEST_CASE("tv distance of identical vectors is zero") {
    std::vector<double> p{0.25, 0.5, 0.25};
    CHECK(k::tv_distance(p.data(), p.data(), p.size()) == 0.0);
    std::vector<double> q{0.5, 0.25, 0.25};
    CHECK(k::tv_distance(p.data(), q.data(), p.size()) == doctest::Approx(0.25));
}

TEST_CASE("a backend was selected") {
    const char* b = k::active_backend();
    CHECK((std::string(b) == "scalar" || std::string(b) == "avx2" ||
           std::string(b) == "neon"));
}
