#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dgx/grammar.hpp"
#include "dgx/store.hpp"

namespace dgx {

// Truncation caps for the enumerated state space: a state is kept only if,
// for every species, the total count across that species' parameter
// valuations stays within the cap. Out-of-cap transitions are dropped
// entirely (reflecting truncation), which keeps the generator conservative.
struct Caps {
    std::int64_t default_cap = 100;
    std::vector<std::pair<std::string, std::int64_t>> per_species;
    std::size_t max_states = 200000;

    std::int64_t cap_for(const std::string& species) const {
        for (const auto& [name, cap] : per_species) {
            if (name == species) return cap;
        }
        return default_cap;
    }
};

// One count coordinate: a species together with a concrete valuation of its
// (finite-domain) integer slots.
struct CountClass {
    int ctor = -1;
    std::vector<std::int64_t> vals;
};

using CountState = std::vector<std::int32_t>;  // one count per CountClass

struct CountSpace {
    const Grammar* grammar = nullptr;
    Caps caps;
    std::vector<CountClass> classes;
    std::map<std::pair<int, std::vector<std::int64_t>>, int> class_index;
    std::vector<CountState> states;
    std::map<CountState, int> state_index;

    int find_class(int ctor, const std::vector<std::int64_t>& vals) const;
    int find_state(const CountState& s) const;  // -1 when absent
    std::string class_label(int ci) const;
    bool state_on_boundary(const CountState& s) const;
};

// Sparse CTMC generator over a CountSpace. W[row, col] is the flow rate
// col -> row for row != col; each diagonal is minus its column's off-diagonal
// sum, accumulated exactly before a single final rounding.
struct GeneratorMatrix {
    int n = 0;
    // CSR over rows (includes diagonal entries).
    std::vector<std::int32_t> row_ptr;
    std::vector<std::int32_t> col_idx;
    std::vector<double> vals;
    // Raw per-entry contribution lists (off-diagonal, one entry per rule
    // multiplicity unit); retained only when requested at build time.
    std::map<std::pair<int, int>, std::vector<double>> contributions;

    double entry(int row, int col) const;
    double max_exit_rate() const;
    std::vector<double> column_sums() const;
    std::size_t nnz() const { return vals.size(); }
};

// Breadth-first closure of the seed state under in-cap rule applications.
// Requires a count-based grammar: no continuous rules, no `age`, no real or
// vector slots, every int slot with a declared finite domain, and only
// finite discrete fresh-variable distributions.
CountSpace enumerate_states(const Grammar& g, const std::vector<TermInit>& seed,
                            const Caps& caps);

// Builds the generator for `rules_from` on an existing space (constructors
// are resolved by name, so a component grammar can be evaluated on the space
// enumerated for a composition).
GeneratorMatrix build_generator(const Grammar& rules_from, const CountSpace& space,
                                bool keep_contributions = false);

// p(t) = exp(tW) p0 by uniformization with adaptive Poisson truncation; the
// result is nonnegative and sums to 1 within tol (total variation).
std::vector<double> transient_distribution(const GeneratorMatrix& W, std::vector<double> p0,
                                           double t, double tol);

struct CompositionReport {
    double max_exact_residual = 0.0;   // |W(g1+g2) - W(g1) - W(g2)|, exact arithmetic
    double max_double_residual = 0.0;  // same on the rounded double matrices
    int n_states = 0;
};

// Verifies operator additivity on the union space of compose(g1, g2).
CompositionReport check_compositionality(const Grammar& g1, const Grammar& g2,
                                         const std::vector<TermInit>& seed, const Caps& caps);

// Probability mass sitting on truncation-boundary states.
double boundary_mass(const CountSpace& space, const std::vector<double>& p);

// Index of the state described by a term multiset; -1 when it falls outside
// the space (or is not representable).
int state_index_of_terms(const CountSpace& space, const std::vector<Term>& terms);

// Sparse triplet export `row col value` (rows ascending), and a JSON legend
// mapping state indices to count vectors.
void write_generator_triplets(std::ostream& os, const GeneratorMatrix& W);
std::string state_legend_json(const CountSpace& space);

}  // namespace dgx
