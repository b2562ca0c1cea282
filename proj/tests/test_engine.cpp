#include <doctest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dgx/engine.hpp"
#include "dgx/trajectory_io.hpp"
#include "oracle_helpers.hpp"

using namespace dgx;

namespace {

std::string read_corpus(const std::string& name) {
    std::ifstream in(std::string(DGX_CORPUS_DIR) + "/" + name);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("simulate_ct: no rules means no events and a t_max finish") {
    Grammar g = parse_grammar("grammar G { species A[]; }");
    SimOptions opts;
    opts.t_max = 3.0;
    Trajectory tr = simulate_ct(g, {{"A", {}}, {"A", {}}}, opts);
    CHECK(tr.events.empty());
    CHECK(tr.termination == Termination::TMax);
    CHECK(tr.t_end == 3.0);
    CHECK(tr.final_state.size() == 2);
}

TEST_CASE("simulate_ct: pure death waiting time has the exponential mean") {
    Grammar g = parse_grammar("grammar G { species A[]; rule die: A[] -> 0 with 1.0; }");
    SimOptions opts;
    opts.t_max = 100.0;
    opts.seed = 2025;
    std::vector<double> times;
    for (int k = 0; k < 10000; ++k) {
        Trajectory tr = simulate_ct(g, {{"A", {}}}, opts, static_cast<std::uint64_t>(k));
        REQUIRE(tr.events.size() == 1);
        times.push_back(*tr.events[0].t);
    }
    CHECK(std::abs(oracle::mean(times) - 1.0) <= 0.03);
}

TEST_CASE("simulate_ct: extinction fast-forwards when matches run out") {
    Grammar g = parse_grammar("grammar G { species A[]; rule die: A[] -> 0 with 5.0; }");
    SimOptions opts;
    opts.t_max = 10.0;
    opts.seed = 3;
    Trajectory tr = simulate_ct(g, {{"A", {}}}, opts);
    CHECK(tr.events.size() == 1);
    CHECK(tr.termination == Termination::Extinction);
    CHECK(tr.t_end == 10.0);
    CHECK(tr.final_a_tot == 0.0);
}

TEST_CASE("simulate_ct: hybrid growth-division first-event law (quick check)") {
    Grammar g = parse_grammar(read_corpus("growth-division.dg"));
    SimOptions opts;
    opts.t_max = 20.0;
    opts.seed = 99;
    std::vector<double> first;
    for (int k = 0; k < 2000; ++k) {
        Trajectory tr = simulate_ct(g, {{"cell", {Value(1.0)}}}, opts,
                                    static_cast<std::uint64_t>(k));
        REQUIRE(!tr.events.empty());
        first.push_back(*tr.events[0].t);
    }
    // Survivor exp(-(t + t^2/2)): the cumulative hazard of rate V(t) = 1 + t.
    auto cdf = [](double t) { return 1.0 - std::exp(-(t + 0.5 * t * t)); };
    CHECK(oracle::ks_statistic(first, cdf) <= 0.04);
}

TEST_CASE("simulate_ct: ODE updates feed the propensity continuously") {
    // dV/dt = 1 with division propensity V: by t the hazard is t + t^2/2.
    Grammar g = parse_grammar(read_corpus("growth-division.dg"));
    SimOptions opts;
    opts.t_max = 0.75;
    opts.seed = 5;
    opts.snapshot_dt = 0.25;
    Trajectory tr = simulate_ct(g, {{"cell", {Value(1.0)}}}, opts);
    // Check interpolated snapshots of V while no event happened yet.
    for (const Snapshot& s : tr.snapshots) {
        if (!tr.events.empty() && tr.events[0].t && s.t > *tr.events[0].t) break;
        REQUIRE(s.state.size() == 1);
        CHECK(s.state[0].params[0].as_real() == doctest::Approx(1.0 + s.t).epsilon(1e-6));
    }
}

TEST_CASE("simulate_ct: non-Markovian erlang hazard produces Erlang waiting times") {
    Grammar g = parse_grammar(read_corpus("erlang-delay.dg"));
    SimOptions opts;
    opts.t_max = 200.0;
    opts.seed = 1001;
    std::vector<double> times;
    for (int k = 0; k < 2000; ++k) {
        Trajectory tr = simulate_ct(g, {{"A", {}}}, opts, static_cast<std::uint64_t>(k));
        REQUIRE(tr.events.size() == 1);
        times.push_back(*tr.events[0].t);
    }
    auto cdf = [](double t) { return oracle::erlang_cdf(t, 2, 1.0); };
    CHECK(oracle::ks_statistic(times, cdf) <= 0.04);
}

TEST_CASE("simulate_ct: diffusion-only continuous motion conserves the summed signal") {
    Grammar g = parse_grammar(
        "grammar G { dim 2; const chi_max = 2; "
        "species cell[chi: int(0..2), x: vec, V: real, phi: real]; "
        "rule diffuse: cell[c1, x1, V1, p1], cell[chi_max, x2, V2, p2] "
        "-> cell[c1, x1, V1, p1], cell[chi_max, x2, V2, p2] "
        "solving { dp1/dt = exp(-(norm(x1 - x2) / (V1 * V2)^0.25)^2) * (p2 - p1) }; }");
    REQUIRE(validate(g).empty());
    std::vector<TermInit> init;
    double phi0[] = {0.9, 0.1, 0.4};
    double xs[][2] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    for (int i = 0; i < 3; ++i)
        init.push_back({"cell",
                        {Value(std::int64_t{2}), Value(VecD{xs[i][0], xs[i][1]}), Value(1.0),
                         Value(phi0[i])}});
    SimOptions opts;
    opts.t_max = 10.0;
    opts.seed = 1;
    Trajectory tr = simulate_ct(g, init, opts);
    CHECK(tr.events.empty());
    double before = 0.9 + 0.1 + 0.4;
    double after = 0.0;
    for (const Term& t : tr.final_state) after += t.params[3].as_real();
    CHECK(std::abs(after - before) / before <= 1e-6);
    // Values relax toward the common mean.
    for (const Term& t : tr.final_state)
        CHECK(t.params[3].as_real() == doctest::Approx(before / 3).epsilon(0.02));
}

TEST_CASE("simulate_ct: determinism is bitwise") {
    Grammar g = parse_grammar(read_corpus("epithelium.dg"));
    std::vector<TermInit> init{
        {"cell", {Value(std::int64_t{0}), Value(VecD{0, 0}), Value(1.0), Value(0.0)}},
        {"cell", {Value(std::int64_t{2}), Value(VecD{1, 0}), Value(1.0), Value(0.5)}}};
    SimOptions opts;
    opts.t_max = 2.0;
    opts.seed = 8;
    opts.snapshot_dt = 0.5;
    Trajectory a = simulate_ct(g, init, opts);
    Trajectory b = simulate_ct(g, init, opts);
    REQUIRE(a.events.size() == b.events.size());
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        CHECK(*a.events[i].t == *b.events[i].t);
        CHECK(a.events[i].rule == b.events[i].rule);
        REQUIRE(a.events[i].draws.size() == b.events[i].draws.size());
        for (std::size_t j = 0; j < a.events[i].draws.size(); ++j)
            CHECK(a.events[i].draws[j].second == b.events[i].draws[j].second);
    }
    TrajectoryMeta meta;
    meta.grammar_hash = grammar_hash(g);
    meta.mode = "ct";
    meta.opts = opts;
    std::ostringstream sa, sb;
    write_trajectory_jsonl(sa, a, meta, g);
    write_trajectory_jsonl(sb, b, meta, g);
    CHECK(sa.str() == sb.str());
}

TEST_CASE("simulate_ct: Zeno grammars stop at the event cap") {
    Grammar g = parse_grammar(
        "grammar G { species A[n: int]; rule accel: A[n] -> A[n + 1] with 2^n; }");
    REQUIRE(validate(g).empty());
    SimOptions opts;
    opts.t_max = 100.0;
    opts.seed = 17;
    opts.max_events = 200;
    auto start = std::chrono::steady_clock::now();
    try {
        simulate_ct(g, {{"A", {Value(std::int64_t{0})}}}, opts);
        FAIL("expected EventCapExceeded");
    } catch (const EventCapExceeded& e) {
        CHECK(e.partial.events.size() == 200);
        CHECK(e.partial.termination == Termination::EventCap);
        CHECK(e.partial.t_end < opts.t_max);
    }
    auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start);
    CHECK(elapsed.count() < 10.0);
}

TEST_CASE("simulate_dt: branching fractions and SPG restrictions") {
    Grammar g = parse_grammar(
        "grammar G { species A[]; species B[]; species C[]; "
        "rule a2b: A[] -> B[] with 2.0; rule a2c: A[] -> C[] with 1.0; }");
    int b_count = 0;
    const int n = 30000;
    for (int k = 0; k < n; ++k) {
        Trajectory tr = simulate_dt(g, {{"A", {}}}, 1, static_cast<std::uint64_t>(k));
        REQUIRE(tr.events.size() == 1);
        if (tr.events[0].rule == "a2b") ++b_count;
        CHECK(!tr.events[0].t.has_value());
    }
    CHECK(std::abs(static_cast<double>(b_count) / n - 2.0 / 3.0) <= 0.01);

    Grammar solving = parse_grammar(read_corpus("epithelium.dg"));
    CHECK_THROWS_AS(simulate_dt(solving, {}, 1, 0), NotAnSPG);
    Grammar aged = parse_grammar(read_corpus("erlang-delay.dg"));
    CHECK_THROWS_AS(simulate_dt(aged, {{"A", {}}}, 1, 0), NotAnSPG);

    Trajectory empty_run = simulate_dt(g, {}, 5, 0);
    CHECK(empty_run.events.empty());
    CHECK(empty_run.termination == Termination::Extinction);
}

TEST_CASE("restore_times: single-event gap is Exponential(a_tot)") {
    Grammar g = parse_grammar("grammar G { species A[]; rule die: A[] -> 0 with 4.0; }");
    std::vector<double> times;
    for (int k = 0; k < 10000; ++k) {
        Trajectory dt = simulate_dt(g, {{"A", {}}}, 1, static_cast<std::uint64_t>(k));
        REQUIRE(dt.events.size() == 1);
        Trajectory ct = restore_times(dt, g, static_cast<std::uint64_t>(k) + 77);
        REQUIRE(ct.events.size() == 1);
        times.push_back(*ct.events[0].t);
    }
    CHECK(std::abs(oracle::mean(times) - 0.25) <= 0.01);

    // Empty event list restores to an empty timed trajectory.
    Trajectory none = simulate_dt(g, {}, 0, 1);
    Trajectory restored = restore_times(none, g, 5);
    CHECK(restored.events.empty());
    CHECK(restored.has_times);
}

TEST_CASE("restore_times: rejects polluted inputs") {
    Grammar g = parse_grammar("grammar G { species A[]; rule die: A[] -> 0 with 1.0; }");
    Trajectory dt = simulate_dt(g, {{"A", {}}}, 1, 4);
    Trajectory tampered = dt;
    tampered.events[0].rule = "nonexistent";
    CHECK_THROWS_AS(restore_times(tampered, g, 0), ReplayMismatch);
    Trajectory already = restore_times(dt, g, 0);
    CHECK_THROWS_AS(restore_times(already, g, 0), ReplayMismatch);
}

TEST_CASE("trajectory_loglik: survivor-only and one-event closed forms") {
    Grammar g = parse_grammar("grammar G { species A[]; rule die: A[] -> 0 with 0.5; }");
    // Zero events up to T: log L = -a * T.
    Trajectory none;
    none.has_times = true;
    none.initial = {Term{1, 0, {}}};
    none.final_state = none.initial;
    none.t_end = 3.0;
    none.termination = Termination::TMax;
    CHECK(trajectory_loglik(g, none) == doctest::Approx(-1.5).epsilon(1e-12));

    // One event at T = 2 ends the observation: ln(0.5) - 0.5 * 2.
    Trajectory one;
    one.has_times = true;
    one.initial = {Term{1, 0, {}}};
    EventRec ev;
    ev.t = 2.0;
    ev.rule = "die";
    ev.consumed = {Term{1, 0, {}}};
    one.events.push_back(ev);
    one.t_end = 2.0;
    one.termination = Termination::TMax;
    double expected = std::log(0.5) - 1.0;
    CHECK(trajectory_loglik(g, one) == doctest::Approx(expected).epsilon(1e-9));
    CHECK(expected == doctest::Approx(-1.693147).epsilon(1e-6));
}

TEST_CASE("trajectory_loglik: generating rates dominate perturbed rates") {
    Grammar g = parse_grammar(read_corpus("birth-death.dg"));
    Grammar perturbed = parse_grammar(
        "grammar BD4 { species A[]; const b = 4.0; const d = 4.0; "
        "rule birth: 0 -> A[] with b; rule death: A[] -> 0 with d; }");
    SimOptions opts;
    opts.t_max = 4.0;
    opts.seed = 11;
    double sum_true = 0.0, sum_pert = 0.0;
    const int n = 200;
    for (int k = 0; k < n; ++k) {
        Trajectory tr = simulate_ct(g, {}, opts, static_cast<std::uint64_t>(k));
        double lt = trajectory_loglik(g, tr);
        double lp = trajectory_loglik(perturbed, tr);
        CHECK(std::isfinite(lt));
        sum_true += lt;
        sum_pert += lp;
    }
    CHECK(sum_true / n > sum_pert / n);
}

TEST_CASE("trajectory_loglik: replay consistency through ODE segments") {
    Grammar g = parse_grammar(read_corpus("growth-division.dg"));
    SimOptions opts;
    opts.t_max = 2.0;
    opts.seed = 21;
    Trajectory tr = simulate_ct(g, {{"cell", {Value(1.0)}}}, opts);
    double ll = trajectory_loglik(g, tr);
    CHECK(std::isfinite(ll));
    // Replay reproduces the recorded final continuous state within tolerance:
    // the final dump's V values came from the same integration route, so
    // compare the recorded survivor integral indirectly by re-running.
    double ll2 = trajectory_loglik(g, tr);
    CHECK(ll == ll2);

    Trajectory tampered = tr;
    if (!tampered.events.empty()) {
        tampered.events[0].consumed[0].id = 999;
        CHECK_THROWS_AS(trajectory_loglik(g, tampered), ReplayMismatch);
    }
}

TEST_CASE("trajectory IO: round trip") {
    Grammar g = parse_grammar(read_corpus("epithelium.dg"));
    std::vector<TermInit> init{
        {"cell", {Value(std::int64_t{0}), Value(VecD{0, 0}), Value(1.0), Value(0.0)}},
        {"cell", {Value(std::int64_t{2}), Value(VecD{1, 0}), Value(1.0), Value(0.5)}}};
    SimOptions opts;
    opts.t_max = 1.5;
    opts.seed = 13;
    opts.snapshot_dt = 0.5;
    Trajectory tr = simulate_ct(g, init, opts);
    TrajectoryMeta meta;
    meta.grammar_hash = grammar_hash(g);
    meta.mode = "ct";
    meta.seed = 13;
    meta.opts = opts;

    std::ostringstream os;
    write_trajectory_jsonl(os, tr, meta, g);
    std::istringstream is(os.str());
    TrajectoryMeta meta2;
    Trajectory rt = read_trajectory_jsonl(is, g, &meta2);
    CHECK(meta2.grammar_hash == meta.grammar_hash);
    CHECK(meta2.seed == 13);
    REQUIRE(rt.events.size() == tr.events.size());
    for (std::size_t i = 0; i < tr.events.size(); ++i) {
        CHECK(*rt.events[i].t == *tr.events[i].t);
        CHECK(rt.events[i].rule == tr.events[i].rule);
        CHECK(rt.events[i].consumed.size() == tr.events[i].consumed.size());
        CHECK(rt.events[i].draws.size() == tr.events[i].draws.size());
    }
    CHECK(rt.snapshots.size() == tr.snapshots.size());
    CHECK(rt.termination == tr.termination);
    CHECK(rt.t_end == tr.t_end);
    // The loglik of the round-tripped trajectory is identical.
    CHECK(trajectory_loglik(g, rt) == trajectory_loglik(g, tr));
}

TEST_CASE("for_each_replica: parallel execution covers every index once") {
    std::vector<int> hits(1000, 0);
    for_each_replica(1000, 4, [&](int k) { hits[k] += 1; });
    for (int h : hits) CHECK(h == 1);
}
