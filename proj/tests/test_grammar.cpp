#include <doctest.h>

#include <fstream>
#include <sstream>

#include "dgx/grammar.hpp"
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

const char* kCorpusModels[] = {"birth-death.dg",    "abswitch.dg",      "erlang-delay.dg",
                               "growth-division.dg", "predator-prey.dg", "epithelium.dg"};

}  // namespace

TEST_CASE("parse: one-rule grammar") {
    Grammar g = parse_grammar("grammar G { species A[]; rule r: A[] -> 0 with 1.0; }");
    CHECK(g.name == "G");
    REQUIRE(g.rules.size() == 1);
    const Rule& r = g.rules[0];
    CHECK(r.kind == RuleKind::Jump);
    CHECK(r.lhs.size() == 1);
    CHECK(r.rhs.empty());
    CHECK(r.multiplicity == 1);
    Env env;
    CHECK(eval(r.propensity, env).as_real() == 1.0);
}

TEST_CASE("parse: the epithelium transcription has 2 jump + 3 continuous rules") {
    Grammar g = parse_grammar(read_corpus("epithelium.dg"));
    REQUIRE(g.rules.size() == 5);
    int jump = 0, cont = 0;
    for (const Rule& r : g.rules) (r.kind == RuleKind::Jump ? jump : cont)++;
    CHECK(jump == 2);
    CHECK(cont == 3);
    CHECK(validate(g).empty());
}

TEST_CASE("parse: undeclared constructor is a sort error") {
    CHECK_THROWS_AS(parse_grammar("grammar G { species A[]; rule r: A[] -> B[] with 1; }"),
                    SortError);
    CHECK_THROWS_AS(parse_grammar("grammar G { species A[]; rule r: B[] -> 0 with 1; }"),
                    SortError);
}

TEST_CASE("parse: syntax errors carry line and column") {
    try {
        parse_grammar("grammar G {\n  species A[];\n  rule r A[] -> 0 with 1;\n}");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.loc.line == 3);
        CHECK(e.loc.col > 0);
    }
}

TEST_CASE("parse: subgrammar calls are rejected with a dedicated message") {
    try {
        parse_grammar("grammar G { species A[]; rule r: A[] -> call Sub() with 1; }");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(std::string(e.reason).find("subgrammar") != std::string::npos);
    }
}

TEST_CASE("parse: arity and literal sort mismatches") {
    CHECK_THROWS_AS(
        parse_grammar("grammar G { species A[x: int(0..3)]; rule r: A[] -> 0 with 1; }"),
        SortError);
    CHECK_THROWS_AS(
        parse_grammar("grammar G { species A[x: int(0..3)]; rule r: A[1.5] -> 0 with 1; }"),
        SortError);
    // Repeated variable across slots of different sorts.
    CHECK_THROWS_AS(
        parse_grammar(
            "grammar G { species A[x: int(0..3), y: real]; rule r: A[v, v] -> 0 with 1; }"),
        SortError);
}

TEST_CASE("round-trip: every corpus model re-parses to a structurally equal grammar") {
    for (const char* name : kCorpusModels) {
        CAPTURE(name);
        Grammar g1 = parse_grammar(read_corpus(name));
        std::string printed = pretty_print(g1);
        Grammar g2 = parse_grammar(printed);
        CHECK(grammars_structurally_equal(g1, g2));
        // Idempotence: printing the re-parse gives the same text.
        CHECK(pretty_print(g2) == printed);
        CHECK(grammar_hash(g1) == grammar_hash(g2));
    }
}

TEST_CASE("round-trip preserves multiplicities and prints one rule keyword per rule") {
    Grammar g = parse_grammar("grammar G { species A[]; rule r * 3: A[] -> 0 with 1.0; }");
    CHECK(g.rules[0].multiplicity == 3);
    std::string printed = pretty_print(g);
    Grammar g2 = parse_grammar(printed);
    CHECK(g2.rules[0].multiplicity == 3);

    std::string one = pretty_print(
        parse_grammar("grammar G { species A[]; rule r: A[] -> 0 with 1.0; }"));
    std::size_t count = 0, pos = 0;
    while ((pos = one.find("rule ", pos)) != std::string::npos) {
        ++count;
        pos += 5;
    }
    CHECK(count == 1);
}

TEST_CASE("compose: identity, multiplicity merge, conflicts") {
    Grammar g = parse_grammar(read_corpus("birth-death.dg"));
    Grammar empty = parse_grammar("grammar E { }");
    CHECK(grammars_structurally_equal(compose(g, empty), g));
    CHECK(grammars_structurally_equal(compose(empty, g), g));

    // Structurally equal rules merge by multiplicity even under renaming.
    Grammar g1 = parse_grammar(
        "grammar G1 { species A[x: int(0..2)]; rule r: A[u] -> A[u] with 2.0; }");
    Grammar g2 = parse_grammar(
        "grammar G2 { species A[x: int(0..2)]; rule s: A[w] -> A[w] with 2.0; }");
    Grammar merged = compose(g1, g2);
    REQUIRE(merged.rules.size() == 1);
    CHECK(merged.rules[0].multiplicity == 2);

    Grammar conflict = parse_grammar("grammar C { species A[x: real]; }");
    CHECK_THROWS_AS(compose(g1, conflict), DeclarationConflict);
    Grammar cval1 = parse_grammar("grammar K1 { const k = 1.0; }");
    Grammar cval2 = parse_grammar("grammar K2 { const k = 2.0; }");
    CHECK_THROWS_AS(compose(cval1, cval2), DeclarationConflict);
}

TEST_CASE("compose: associative and commutative up to rule reordering") {
    std::mt19937_64 rng(2024);
    Grammar empty = parse_grammar("grammar E { }");
    for (int trial = 0; trial < 20; ++trial) {
        Grammar a = oracle::random_count_grammar(rng, false, "Ga");
        Grammar b = oracle::random_count_grammar(rng, false, "Gb");
        Grammar c = oracle::random_count_grammar(rng, false, "Gc");
        CHECK(grammars_structurally_equal(compose(a, b), compose(b, a)));
        CHECK(grammars_structurally_equal(compose(compose(a, b), c),
                                          compose(a, compose(b, c))));
        CHECK(grammars_structurally_equal(compose(a, empty), a));
        CHECK(validate(compose(a, b)).empty());
    }
}

TEST_CASE("validate: diagnostics for the spec's edge cases") {
    // RHS variable without a choosing clause.
    Grammar g1 = parse_grammar(
        "grammar G { species A[v: real]; rule r: A[v] -> A[v + dx] with 1; }");
    auto d1 = validate(g1);
    REQUIRE(d1.size() == 1);
    CHECK(d1[0].message.find("dx") != std::string::npos);

    // Continuous rule targeting an int slot.
    Grammar g2 = parse_grammar(
        "grammar G { species A[n: int(0..5)]; rule r: A[n] -> A[n] solving { dn/dt = 1 }; }");
    auto d2 = validate(g2);
    REQUIRE(!d2.empty());
    CHECK(d2[0].message.find("real") != std::string::npos);

    // `age` outside a jump propensity.
    Grammar g3 = parse_grammar(
        "grammar G { species A[v: real]; rule r: A[v] -> A[v] solving { dv/dt = age }; }");
    CHECK(!validate(g3).empty());

    // Propensity referencing a fresh variable.
    Grammar g4 = parse_grammar(
        "grammar G { species A[v: real]; rule r: A[v] -> A[q] with q "
        "choosing q ~ Normal(0, 1); }");
    CHECK(!validate(g4).empty());

    // Continuous rule that rewrites its terms.
    Grammar g5 = parse_grammar(
        "grammar G { species A[v: real]; rule r: A[v] -> A[v + 1] solving { dv/dt = 1 }; }");
    CHECK(!validate(g5).empty());

    // Clean grammars validate quietly.
    for (const char* name : kCorpusModels) {
        CAPTURE(name);
        CHECK(validate(parse_grammar(read_corpus(name))).empty());
    }
}

TEST_CASE("validate: age is accepted only in jump propensities") {
    Grammar ok = parse_grammar(
        "grammar G { species A[]; rule r: A[] -> 0 with erlang_hazard(age, 2, 1.0); }");
    CHECK(validate(ok).empty());
    CHECK(ok.uses_age());
    CHECK(ok.rules[0].uses_age);
}
