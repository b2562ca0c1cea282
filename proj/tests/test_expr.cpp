#include <doctest.h>

#include <cmath>
#include <cstring>

#include "dgx/expr.hpp"
#include "dgx/grammar.hpp"
#include "oracle_helpers.hpp"

using namespace dgx;

namespace {

// Parse an expression by wrapping it in a throwaway rule.
Expr parse_expr(const std::string& text) {
    Grammar g = parse_grammar("grammar T { species A[]; rule r: A[] -> 0 with " + text + "; }");
    static std::vector<Grammar> keep_alive;  // ConstRef evaluation needs the table
    keep_alive.push_back(std::move(g));
    return keep_alive.back().rules[0].propensity;
}

}  // namespace

TEST_CASE("eval: arithmetic and indicators") {
    Env env;
    env.bind("V", Value(std::int64_t{3}));
    CHECK(eval(parse_expr("2 * V + 1"), env).as_int() == 7);

    Env env2;
    env2.bind("chi", Value(std::int64_t{2}));
    env2.bind("chi_max", Value(std::int64_t{2}));
    CHECK(eval(parse_expr("step(chi < chi_max)"), env2).as_int() == 0);
    env2.bind("chi", Value(std::int64_t{1}));
    CHECK(eval(parse_expr("step(chi < chi_max)"), env2).as_int() == 1);

    Env e3;
    e3.bind("x", Value(std::int64_t{1}));
    CHECK(eval(parse_expr("x in {0, 1}"), e3).as_int() == 1);
    e3.bind("x", Value(std::int64_t{2}));
    CHECK(eval(parse_expr("x in {0, 1}"), e3).as_int() == 0);
}

TEST_CASE("eval: normal_pdf against the independent constant") {
    // Oracle: 1/sqrt(2*pi), computed here rather than taken from the library.
    const double expected = 1.0 / std::sqrt(2.0 * M_PI);
    Env env;
    double got = eval(parse_expr("normal_pdf(0, 0, 1)"), env).as_real();
    CHECK(std::abs(got - expected) < 1e-15);
    CHECK(got == doctest::Approx(0.3989422804).epsilon(1e-10));

    // Vector argument: isotropic product density.
    env.bind("v", Value(VecD{0.0, 0.0}));
    double got2 = eval(parse_expr("normal_pdf(v, 0, 1)"), env).as_real();
    CHECK(got2 == doctest::Approx(expected * expected).epsilon(1e-12));
}

TEST_CASE("eval: vector arithmetic and norm") {
    Env env;
    env.bind("x", Value(VecD{3.0, 0.0}));
    env.bind("y", Value(VecD{0.0, 4.0}));
    CHECK(eval(parse_expr("norm(x - y)"), env).as_real() == doctest::Approx(5.0));
    Value sum = eval(parse_expr("x + y"), env);
    CHECK(sum.as_vec() == VecD{3.0, 4.0});
    Value scaled = eval(parse_expr("2 * x"), env);
    CHECK(scaled.as_vec() == VecD{6.0, 0.0});
}

TEST_CASE("eval: errors") {
    Env env;
    CHECK_THROWS_AS(eval(parse_expr("missing + 1"), env), UnboundVariable);
    CHECK_THROWS_AS(eval(parse_expr("log(0 - 1)"), env), DomainError);
    CHECK_THROWS_AS(eval(parse_expr("1 / (2 - 2)"), env), DomainError);
    CHECK_THROWS_AS(eval(parse_expr("sqrt(0 - 4)"), env), DomainError);
    CHECK_THROWS_AS(eval(parse_expr("(0 - 2) ^ 0.5"), env), DomainError);
}

TEST_CASE("eval is referentially transparent") {
    Env env;
    env.bind("V", Value(0.7312));
    Expr e = parse_expr("exp(V) * normal_pdf(V, 0.3, 1.7) + V^3 / (1 + V)");
    double a = eval(e, env).as_real();
    double b = eval(e, env).as_real();
    CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}

TEST_CASE("erlang_hazard: examples") {
    // Shape 1 collapses to the constant rate.
    CHECK(erlang_hazard(0.7, 1, 2.0) == doctest::Approx(2.0).epsilon(1e-12));
    // Oracle: Gamma(2, x) = (1 + x) e^{-x}, so the hazard is l^2 t / (1 + l t).
    const double t = 1.0, l = 1.0;
    const double expected = l * l * t / (1.0 + l * t);
    CHECK(erlang_hazard(t, 2, l) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(0.5));
    // t^{n-1} kills the density at t = 0 for shape > 1.
    CHECK(erlang_hazard(0.0, 3, 5.0) == 0.0);
    CHECK(erlang_hazard(0.0, 1, 5.0) == 5.0);

    CHECK_THROWS_AS(erlang_hazard(1.0, 0, 1.0), InvalidParameter);
    CHECK_THROWS_AS(erlang_hazard(1.0, 2, 0.0), InvalidParameter);
    CHECK_THROWS_AS(erlang_hazard(-1.0, 2, 1.0), InvalidParameter);
}

TEST_CASE("erlang_hazard: shape-1 identity and large-t limit") {
    for (double lambda : {0.1, 1.0, 10.0}) {
        for (double t = 0.0; t <= 50.0; t += 2.5) {
            double h = erlang_hazard(t, 1, lambda);
            CHECK(std::abs(h - lambda) <= 1e-12 * lambda);
        }
    }
    // The exact hazard approaches lambda like (n-1)/(lambda t): at
    // lambda*t = 50 the deviation is (n-1)/50, so the 1e-3 band is only
    // reachable further out, at lambda*t = 5000.
    for (int n = 1; n <= 5; ++n) {
        for (double lambda : {0.5, 1.0, 3.0}) {
            double h50 = erlang_hazard(50.0 / lambda, n, lambda);
            CHECK(std::abs(h50 - lambda) / lambda <= (n - 1) / 50.0 + 1e-6);
            double h5000 = erlang_hazard(5000.0 / lambda, n, lambda);
            CHECK(std::abs(h5000 - lambda) / lambda <= 1e-3);
        }
    }
}

TEST_CASE("erlang_hazard agrees with the incomplete-gamma formula") {
    // Second algebraic route: l^n t^{n-1} e^{-l t} / Gamma(n, l t).
    for (int n = 1; n <= 4; ++n) {
        for (double lambda : {0.5, 2.0}) {
            for (double t = 0.25; t <= 5.0; t += 0.25) {
                double x = lambda * t;
                double direct = std::pow(lambda, n) * std::pow(t, n - 1) * std::exp(-x) /
                                incomplete_gamma_upper(n, x);
                CHECK(erlang_hazard(t, n, lambda) ==
                      doctest::Approx(direct).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("hazard_from_density: examples") {
    // Exponential density has constant hazard.
    auto exp_pdf = [](double t) { return 3.0 * std::exp(-3.0 * t); };
    CHECK(hazard_from_density(exp_pdf, 0.4, 1e-9) == doctest::Approx(3.0).epsilon(1e-7));

    // Erlang(2,1): cross-check against the closed form.
    auto erl_pdf = [](double t) { return t * std::exp(-t); };
    CHECK(hazard_from_density(erl_pdf, 1.0, 1e-9) ==
          doctest::Approx(erlang_hazard(1.0, 2, 1.0)).epsilon(1e-8));

    // Uniform(0,1): by hand 1/(1-t).
    auto uni_pdf = [](double t) { return (t >= 0.0 && t <= 1.0) ? 1.0 : 0.0; };
    CHECK(hazard_from_density(uni_pdf, 0.5, 1e-9) == doctest::Approx(2.0).epsilon(1e-7));

    // Survivor underflow: exp(-40) is far below the 1e-12 policy threshold.
    auto unit_exp = [](double t) { return std::exp(-t); };
    CHECK_THROWS_AS(hazard_from_density(unit_exp, 40.0, 1e-12), SurvivorUnderflow);
}

TEST_CASE("hazard_from_density tracks erlang_hazard across shapes") {
    const double quad_tol = 1e-9;
    for (int n = 1; n <= 4; ++n) {
        double lg = std::lgamma(n);
        auto pdf = [n, lg](double t) {
            return std::exp((n - 1) * std::log(t) - t - lg);
        };
        for (double t = 0.5; t <= 5.0; t += 0.5) {
            double got = hazard_from_density(pdf, t, quad_tol);
            double want = erlang_hazard(t, n, 1.0);
            CHECK(std::abs(got - want) <= 10 * quad_tol + 1e-9 * want);
        }
    }
}

TEST_CASE("sample: degenerate and moment checks") {
    Env env;
    RandomStream rng(1234);

    DistributionSpec bern{DistFamily::Bernoulli, {Expr::literal(0.0)}, {}};
    for (int i = 0; i < 1000; ++i) CHECK(sample(bern, env, rng).as_int() == 0);

    DistributionSpec erl{DistFamily::Erlang,
                         {Expr::literal(4.0, true), Expr::literal(2.0)}, {}};
    std::vector<double> draws;
    draws.reserve(100000);
    for (int i = 0; i < 100000; ++i) draws.push_back(sample(erl, env, rng).as_real());
    CHECK(std::abs(oracle::mean(draws) - 2.0) < 0.02);  // mean n/lambda

    DistributionSpec cat{DistFamily::Categorical,
                         {Expr::literal(1.0), Expr::literal(1.0), Expr::literal(1.0),
                          Expr::literal(0.0)},
                         {}};
    for (int i = 0; i < 10000; ++i) CHECK(sample(cat, env, rng).as_int() != 3);
}

TEST_CASE("sample: determinism and parameter validation") {
    Env env;
    DistributionSpec nrm{DistFamily::Normal, {Expr::literal(0.0), Expr::literal(1.0)}, {}};
    RandomStream a(99), b(99);
    for (int i = 0; i < 50; ++i)
        CHECK(sample(nrm, env, a).as_real() == sample(nrm, env, b).as_real());

    RandomStream r1(1);
    DistributionSpec bad{DistFamily::Exponential, {Expr::literal(-1.0)}, {}};
    CHECK_THROWS_AS(sample(bad, env, r1), InvalidParameter);
    DistributionSpec badp{DistFamily::Bernoulli, {Expr::literal(1.5)}, {}};
    CHECK_THROWS_AS(sample(badp, env, r1), InvalidParameter);

    // Vector draws produce one component per dimension.
    RandomStream c(5);
    Value v = sample(nrm, env, c, 3);
    CHECK(v.as_vec().size() == 3);
}

TEST_CASE("replica streams are unrelated and order-independent") {
    auto r0 = RandomStream::for_replica(7, 0);
    auto r1 = RandomStream::for_replica(7, 1);
    auto r0_again = RandomStream::for_replica(7, 0);
    double a = r0.uniform01(), b = r1.uniform01();
    CHECK(a != b);
    CHECK(r0_again.uniform01() == a);
}
