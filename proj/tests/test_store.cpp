#include <doctest.h>

#include <random>

#include "dgx/store.hpp"
#include "oracle_helpers.hpp"

using namespace dgx;

namespace {

Grammar pair_grammar() {
    // A two-pattern rule over slotless terms: n terms give n*(n-1) matches.
    return parse_grammar(
        "grammar G { species A[]; species B[]; "
        "rule single: A[] -> 0 with 1; "
        "rule pair: A[], A[] -> A[], A[] with 1; }");
}

}  // namespace

TEST_CASE("insert: match counts appear incrementally") {
    Grammar g = pair_grammar();
    TermStore store(g);
    CHECK(store.match_count(0) == 0);
    store.insert("A", {});
    CHECK(store.match_count(0) == 1);

    store.insert("A", {});
    store.insert("A", {});
    // Injective ordered pairs of 3 terms.
    CHECK(store.match_count(1) == 6);

    store.insert("B", {});
    CHECK(store.match_count(0) == 3);
    CHECK(store.match_count(1) == 6);
    store.audit();
}

TEST_CASE("remove: matches binding the term retire, others persist") {
    Grammar g = pair_grammar();
    TermStore store(g);
    TermId a1 = store.insert("A", {});
    CHECK(store.match_count(0) == 1);
    store.remove(a1);
    CHECK(store.match_count(0) == 0);

    TermId b1 = store.insert("A", {});
    store.insert("A", {});
    store.insert("A", {});
    CHECK(store.match_count(1) == 6);
    store.remove(b1);
    CHECK(store.match_count(1) == 2);
    store.audit();
    CHECK_THROWS_AS(store.remove(b1), UnknownTerm);
}

TEST_CASE("matches: ordered-pair example with a literal-constrained slot") {
    // The diffusion LHS shape: first pattern free, second pins chi to its max.
    Grammar g = parse_grammar(
        "grammar G { dim 2; const chi_max = 2; "
        "species cell[chi: int(0..2), x: vec, V: real, phi: real]; "
        "rule diffuse: cell[c1, x1, V1, p1], cell[chi_max, x2, V2, p2] "
        "-> cell[c1, x1, V1, p1], cell[chi_max, x2, V2, p2] "
        "solving { dp1/dt = p2 - p1 }; }");
    REQUIRE(validate(g).empty());
    TermStore store(g);
    store.insert("cell", {Value(std::int64_t{0}), Value(VecD{0, 0}), Value(1.0), Value(0.0)});
    TermId cmax = store.insert(
        "cell", {Value(std::int64_t{2}), Value(VecD{1, 0}), Value(1.0), Value(0.5)});
    // (c0, cmax) binds; (cmax, c0) fails the literal; (cmax, cmax) is not injective.
    auto ms = store.matches(0);
    REQUIRE(ms.size() == 1);
    CHECK(ms[0].ids[1] == cmax);

    // A second chi_max cell symmetrizes the flow: 1 + 2 ordered pairs... each
    // free slot can also take a chi_max cell.
    store.insert("cell", {Value(std::int64_t{2}), Value(VecD{0, 1}), Value(1.0), Value(0.2)});
    CHECK(store.match_count(0) == 4);  // (c0,m1),(c0,m2),(m1,m2),(m2,m1)
    store.audit();
}

TEST_CASE("matches: empty store and literal filters") {
    Grammar g = parse_grammar(
        "grammar G { species cell[chi: int(0..5)]; "
        "rule pick: cell[3] -> 0 with 1; }");
    TermStore store(g);
    CHECK(store.matches(0).empty());
    store.insert("cell", {Value(std::int64_t{2})});
    CHECK(store.match_count(0) == 0);
    TermId t3 = store.insert("cell", {Value(std::int64_t{3})});
    auto ms = store.matches(0);
    REQUIRE(ms.size() == 1);
    CHECK(ms[0].ids[0] == t3);
}

TEST_CASE("apply_rewrite: division, death, and identity") {
    Grammar g = parse_grammar(
        "grammar G { species cell[V: real]; "
        "rule divide: cell[V] -> cell[V / 2], cell[V / 2] with V; "
        "rule die: cell[V] -> 0 with 1; "
        "rule refresh: cell[V] -> cell[V] with 1; }");
    TermStore store(g);
    TermId c = store.insert("cell", {Value(2.0)});

    auto m = store.find_match(0, {c});
    REQUIRE(m);
    RewriteDelta delta = store.apply_rewrite(*m, {});
    CHECK(delta.removed.size() == 1);
    CHECK(delta.created.size() == 2);
    for (const Term& t : delta.created) CHECK(t.params[0].as_real() == 1.0);
    CHECK(store.size() == 2);

    // Identity rewrite changes the id but not the count.
    auto say = store.matches(2);
    REQUIRE(!say.empty());
    TermId before = say[0].ids[0];
    RewriteDelta d2 = store.apply_rewrite(say[0], {});
    CHECK(d2.created.size() == 1);
    CHECK(d2.created[0].id != before);
    CHECK(store.size() == 2);

    // Death removes one, creates none.
    auto dm = store.matches(1);
    REQUIRE(!dm.empty());
    RewriteDelta d3 = store.apply_rewrite(dm[0], {});
    CHECK(d3.created.empty());
    CHECK(store.size() == 1);

    // Applying a stale match throws.
    CHECK_THROWS_AS(store.apply_rewrite(*m, {}), StaleMatch);
}

TEST_CASE("apply_rewrite: template evaluation failure leaves the store unchanged") {
    Grammar g = parse_grammar(
        "grammar G { species A[v: real]; rule r: A[v] -> A[log(v)] with 1; }");
    TermStore store(g);
    store.insert("A", {Value(-1.0)});
    auto ms = store.matches(0);
    REQUIRE(ms.size() == 1);
    CHECK_THROWS_AS(store.apply_rewrite(ms[0], {}), DomainError);
    CHECK(store.size() == 1);
    CHECK(store.match_count(0) == 1);
    store.audit();
}

TEST_CASE("enabled_at: clocks survive parameter updates, reset on rewrite") {
    Grammar g = parse_grammar(
        "grammar G { species A[v: real]; rule r: A[v] -> A[v] with v; }");
    TermStore store(g);
    TermId a = store.insert("A", {Value(1.0)});
    auto m0 = store.find_match(0, {a});
    REQUIRE(m0);
    CHECK(m0->enabled_at == 0.0);

    store.set_time(2.5);
    store.set_param(a, 0, Value(7.0));  // continuous motion
    auto m1 = store.find_match(0, {a});
    REQUIRE(m1);
    CHECK(m1->enabled_at == 0.0);  // clock not reset
    CHECK(store.term(a).params[0].as_real() == 7.0);

    RewriteDelta d = store.apply_rewrite(*m1, {});
    auto m2 = store.find_match(0, {d.created[0].id});
    REQUIRE(m2);
    CHECK(m2->enabled_at == 2.5);  // fresh match, fresh clock
    CHECK(m2->enabled_at <= store.time());
}

TEST_CASE("insert with matching terms only touches relevant rules") {
    Grammar g = parse_grammar(
        "grammar G { species A[]; species B[]; rule onlyA: A[] -> 0 with 1; }");
    TermStore store(g);
    store.insert("B", {});
    CHECK(store.match_count(0) == 0);
    store.insert("A", {});
    CHECK(store.match_count(0) == 1);
}

TEST_CASE("property: incremental index equals brute force over random mutations") {
    // Scaled-down sibling of the acceptance criterion (full 100 x 500 there).
    std::mt19937_64 rng(4242);
    for (int trial = 0; trial < 20; ++trial) {
        Grammar g = oracle::random_slotted_grammar(rng, "R" + std::to_string(trial));
        REQUIRE(validate(g).empty());
        TermStore store(g);
        std::vector<TermId> live;

        auto check_all = [&]() {
            store.audit();
            auto dump = store.dump();
            for (std::size_t ri = 0; ri < g.rules.size(); ++ri) {
                auto expect = oracle::brute_force_matches(g, static_cast<int>(ri), dump);
                auto got = store.matches(static_cast<int>(ri));
                REQUIRE(got.size() == expect.size());
                for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(got[i].ids == expect[i]);
            }
        };

        std::uniform_int_distribution<int> d_op(0, 9);
        for (int step = 0; step < 120; ++step) {
            int op = d_op(rng);
            if (op < 5 || live.empty()) {
                // Insert a random term.
                std::uniform_int_distribution<int> d_sp(0,
                                                        static_cast<int>(g.species.size()) - 1);
                int sp = d_sp(rng);
                if (store.size() > 14) continue;
                std::vector<Value> params;
                for (const SlotDecl& s : g.species[sp].slots) {
                    std::uniform_int_distribution<std::int64_t> dv(*s.sort.lo, *s.sort.hi);
                    params.emplace_back(dv(rng));
                }
                live.push_back(store.insert(sp, std::move(params)));
            } else if (op < 8) {
                std::uniform_int_distribution<std::size_t> d_i(0, live.size() - 1);
                std::size_t i = d_i(rng);
                store.remove(live[i]);
                live.erase(live.begin() + static_cast<std::ptrdiff_t>(i));
            } else {
                // Apply a random rewrite if any match exists.
                for (std::size_t ri = 0; ri < g.rules.size(); ++ri) {
                    auto ms = store.matches(static_cast<int>(ri));
                    if (ms.empty() || g.rules[ri].lhs.empty()) continue;
                    std::uniform_int_distribution<std::size_t> d_m(0, ms.size() - 1);
                    RewriteDelta delta = store.apply_rewrite(ms[d_m(rng)], {});
                    for (const Term& t : delta.removed)
                        live.erase(std::find(live.begin(), live.end(), t.id));
                    for (const Term& t : delta.created) live.push_back(t.id);
                    break;
                }
            }
            if (step % 10 == 0) check_all();
        }
        check_all();
    }
}

TEST_CASE("no match ever binds the same term twice") {
    Grammar g = pair_grammar();
    TermStore store(g);
    for (int i = 0; i < 5; ++i) store.insert("A", {});
    for (const Match& m : store.matches(1)) CHECK(m.ids[0] != m.ids[1]);
}
