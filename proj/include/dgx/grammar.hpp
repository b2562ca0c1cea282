#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dgx/expr.hpp"
#include "dgx/value.hpp"

namespace dgx {

struct SlotDecl {
    std::string name;  // auto-named p0, p1, ... when omitted
    Sort sort;
};

struct SpeciesDecl {
    std::string name;
    std::vector<SlotDecl> slots;
    SourceLoc loc;
};

// One LHS slot: either a binding variable or a literal constraint. Literals
// may originate from a named constant; the value is what matters for
// matching, the name is kept for printing.
struct PatternSlot {
    enum class Kind { Var, Literal };
    Kind kind = Kind::Var;
    std::string var;
    Value literal;
    std::string const_name;  // nonempty if the literal came from a constant
    SourceLoc loc;
};

struct TermPattern {
    std::string ctor;
    int ctor_index = -1;
    std::vector<PatternSlot> slots;
    SourceLoc loc;
};

struct TermTemplate {
    std::string ctor;
    int ctor_index = -1;
    std::vector<Expr> slots;
    SourceLoc loc;
};

struct FreshVar {
    std::string name;
    DistributionSpec dist;
    bool is_vec = false;  // `: vec` annotation — draw one component per dimension
    SourceLoc loc;
};

struct Derivative {
    std::string target;  // LHS variable bound to a real slot
    Expr rhs;
    SourceLoc loc;
};

enum class RuleKind { Jump, Continuous };

struct Rule {
    RuleKind kind = RuleKind::Jump;
    std::string name;
    std::int64_t multiplicity = 1;
    std::vector<TermPattern> lhs;
    // Jump rules:
    std::vector<TermTemplate> rhs;
    Expr propensity;
    std::vector<FreshVar> fresh;
    bool uses_age = false;
    // Continuous rules:
    std::vector<Derivative> derivatives;
    SourceLoc loc;
};

struct Grammar {
    std::string name;
    int dim = 2;  // dimension of vec slots
    std::vector<SpeciesDecl> species;
    ConstTable constants;
    std::vector<Rule> rules;

    const SpeciesDecl* find_species(std::string_view n) const;
    int species_index(std::string_view n) const;
    bool has_continuous_rules() const;
    bool uses_age() const;
};

struct Diagnostic {
    SourceLoc loc;
    std::string message;
};

std::string format_diagnostics(const std::vector<Diagnostic>& ds, const std::string& filename);

// Parses one grammar block. Throws SyntaxError for malformed text and
// SortError for unresolved constructors, arity mismatches and slot/sort
// conflicts. No partial grammar escapes on failure.
Grammar parse_grammar(const std::string& text);

// Canonical text form; re-parsing yields a structurally identical grammar.
std::string pretty_print(const Grammar& g);

// Semantic well-formedness checks beyond what the parser enforces. Empty
// result means the grammar is ready to simulate.
std::vector<Diagnostic> validate(const Grammar& g);

// Multiset union of rules. Structurally equal rules (after canonical
// variable renaming) merge by summing multiplicities; shared constructor and
// constant declarations must agree exactly.
Grammar compose(const Grammar& g1, const Grammar& g2);

// Structural equality after canonical variable renaming; ignores rule names.
bool rules_structurally_equal(const Rule& a, const Rule& b);

// Structural grammar equality: same dim, same declarations (as sets), same
// rule multiset. Grammar names are ignored.
bool grammars_structurally_equal(const Grammar& a, const Grammar& b);

// Content digest (FNV-1a of the canonical printed form), stamped into every
// output file so mismatched artifacts are refused.
std::string grammar_hash(const Grammar& g);

}  // namespace dgx
