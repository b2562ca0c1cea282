#include "dgx/exact.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "dgx/kernels.hpp"

namespace dgx {

namespace {

// Error-free accumulation (Shewchuk-style expansion): the sum of the
// components equals the exact real sum of everything added. Entries of the
// generator are accumulated exactly and rounded once, so that composed
// grammars reproduce the summed component generators term for term.
class Expansion {
public:
    void add(double x) {
        std::size_t out = 0;
        for (std::size_t i = 0; i < comps_.size(); ++i) {
            double y = comps_[i];
            double s = x + y;
            double bv = s - x;
            double av = s - bv;
            double err = (x - av) + (y - bv);
            if (err != 0.0) comps_[out++] = err;
            x = s;
        }
        comps_.resize(out);
        if (x != 0.0) comps_.push_back(x);
    }

    void add_negated(const Expansion& o) {
        for (double c : o.comps_) add(-c);
    }

    double round() const {
        double s = 0.0;
        for (double c : comps_) s += c;  // increasing magnitude
        return s;
    }

    bool is_zero() const { return comps_.empty(); }

private:
    std::vector<double> comps_;  // nonoverlapping, increasing magnitude
};

void require_count_based(const Grammar& g) {
    if (g.has_continuous_rules())
        throw NotCountBased("grammar contains solving rules");
    if (g.uses_age()) throw NotCountBased("grammar references 'age'");
    for (const SpeciesDecl& d : g.species) {
        for (const SlotDecl& s : d.slots) {
            if (s.sort.kind != SortKind::Int)
                throw NotCountBased("species '" + d.name + "' has a non-integer slot");
            if (!s.sort.has_range())
                throw NotCountBased("species '" + d.name + "' slot '" + s.name +
                                    "' lacks a declared finite domain");
        }
    }
    for (const Rule& r : g.rules) {
        for (const FreshVar& f : r.fresh) {
            switch (f.dist.family) {
                case DistFamily::Bernoulli:
                case DistFamily::Categorical:
                case DistFamily::DiscreteUniform:
                    break;
                default:
                    throw NotCountBased("rule '" + r.name + "' draws fresh variable '" +
                                        f.name + "' from a continuous distribution");
            }
        }
    }
}

std::vector<std::int64_t> per_species_totals(const CountSpace& space, const CountState& s) {
    std::vector<std::int64_t> totals(space.grammar->species.size(), 0);
    for (std::size_t ci = 0; ci < space.classes.size(); ++ci)
        totals[space.classes[ci].ctor] += s[ci];
    return totals;
}

bool within_caps(const CountSpace& space, const CountState& s) {
    auto totals = per_species_totals(space, s);
    for (std::size_t i = 0; i < totals.size(); ++i) {
        if (totals[i] > space.caps.cap_for(space.grammar->species[i].name)) return false;
    }
    return true;
}

// Enumerates every (class assignment x fresh outcome) application of `r`
// to state `s` and reports the target state with the per-multiplicity-unit
// rate (ordered-injective match count x propensity x outcome probability).
// Out-of-domain and out-of-cap targets are dropped; self-loops are skipped.
class TransitionEnumerator {
public:
    TransitionEnumerator(const CountSpace& space, const Grammar& rules_from)
        : space_(&space), rules_(&rules_from) {}

    using Sink = std::function<void(const Rule&, const CountState&, double)>;

    void enumerate(const CountState& s, const Sink& sink) {
        for (const Rule& r : rules_->rules) {
            if (r.kind != RuleKind::Jump) continue;
            state_ = &s;
            sink_ = &sink;
            rule_ = &r;
            env_ = Env(&rules_->constants);
            usage_.clear();
            assignment_.assign(r.lhs.size(), -1);
            assign_pattern(0);
        }
    }

private:
    const CountSpace* space_;
    const Grammar* rules_;
    const CountState* state_ = nullptr;
    const Sink* sink_ = nullptr;
    const Rule* rule_ = nullptr;
    Env env_;
    std::map<int, int> usage_;  // class -> patterns bound to it
    std::vector<int> assignment_;

    int space_ctor(const std::string& name) const {
        int ci = space_->grammar->species_index(name);
        if (ci < 0)
            throw NotCountBased("constructor '" + name + "' not declared in the state space");
        return ci;
    }

    void assign_pattern(std::size_t p) {
        const Rule& r = *rule_;
        if (p == r.lhs.size()) {
            finish_assignment();
            return;
        }
        const TermPattern& pat = r.lhs[p];
        int want_ctor = space_ctor(pat.ctor);
        for (std::size_t ci = 0; ci < space_->classes.size(); ++ci) {
            const CountClass& cls = space_->classes[ci];
            if (cls.ctor != want_ctor) continue;
            int used = usage_.count(static_cast<int>(ci)) ? usage_[static_cast<int>(ci)] : 0;
            if ((*state_)[ci] <= used) continue;  // not enough copies left
            // Literal and variable consistency.
            bool ok = true;
            std::vector<std::string> bound_here;
            for (std::size_t i = 0; i < pat.slots.size() && ok; ++i) {
                const PatternSlot& slot = pat.slots[i];
                std::int64_t v = cls.vals[i];
                if (slot.kind == PatternSlot::Kind::Literal) {
                    ok = slot.literal.is_int() ? slot.literal.as_int() == v
                                               : slot.literal.as_real() ==
                                                     static_cast<double>(v);
                } else {
                    const Value* prev = env_.find(slot.var);
                    if (prev) {
                        ok = prev->is_int() && prev->as_int() == v;
                    } else {
                        env_.bind(slot.var, Value(v));
                        bound_here.push_back(slot.var);
                    }
                }
            }
            if (ok) {
                ++usage_[static_cast<int>(ci)];
                assignment_[p] = static_cast<int>(ci);
                assign_pattern(p + 1);
                --usage_[static_cast<int>(ci)];
            }
            // Unbind variables introduced by this pattern.
            if (!bound_here.empty()) {
                Env fresh(&rules_->constants);
                for (const auto& [k, v] : env_.vars()) {
                    bool drop = false;
                    for (const auto& b : bound_here) {
                        if (k == b) drop = true;
                    }
                    if (!drop) fresh.bind(k, v);
                }
                env_ = std::move(fresh);
            }
        }
    }

    void finish_assignment() {
        const Rule& r = *rule_;
        // Ordered-injective match count: product of falling factorials.
        double ff = 1.0;
        for (const auto& [ci, k] : usage_) {
            std::int64_t n = (*state_)[ci];
            for (int j = 0; j < k; ++j) ff *= static_cast<double>(n - j);
        }
        if (ff == 0.0) return;
        Value pv = eval(r.propensity, env_);
        double a = pv.as_real();
        if (!std::isfinite(a) || a < 0)
            throw PropensityError("rule '" + r.name + "' propensity is " + format_real(a));
        if (a == 0.0) return;
        expand_fresh(0, ff * a);
    }

    void expand_fresh(std::size_t fi, double rate) {
        const Rule& r = *rule_;
        if (fi == r.fresh.size()) {
            emit_target(rate);
            return;
        }
        const FreshVar& f = r.fresh[fi];
        auto recurse = [&](std::int64_t value, double prob) {
            if (prob <= 0.0) return;
            env_.bind(f.name, Value(value));
            expand_fresh(fi + 1, rate * prob);
        };
        switch (f.dist.family) {
            case DistFamily::Bernoulli: {
                double p = eval(f.dist.params[0], env_).as_real();
                if (!(p >= 0.0 && p <= 1.0))
                    throw InvalidParameter("Bernoulli parameter out of [0,1] in rule '" +
                                           r.name + "'");
                recurse(0, 1.0 - p);
                recurse(1, p);
                break;
            }
            case DistFamily::Categorical: {
                std::vector<double> w(f.dist.params.size());
                double total = 0.0;
                for (std::size_t i = 0; i < w.size(); ++i) {
                    w[i] = eval(f.dist.params[i], env_).as_real();
                    if (w[i] < 0 || !std::isfinite(w[i]))
                        throw InvalidParameter("Categorical weight invalid in rule '" +
                                               r.name + "'");
                    total += w[i];
                }
                if (!(total > 0))
                    throw InvalidParameter("Categorical weights sum to zero in rule '" +
                                           r.name + "'");
                for (std::size_t i = 0; i < w.size(); ++i)
                    recurse(static_cast<std::int64_t>(i), w[i] / total);
                break;
            }
            case DistFamily::DiscreteUniform: {
                auto lo_v = eval(f.dist.params[0], env_);
                auto hi_v = eval(f.dist.params[1], env_);
                std::int64_t lo = lo_v.is_int() ? lo_v.as_int()
                                                : static_cast<std::int64_t>(lo_v.as_real());
                std::int64_t hi = hi_v.is_int() ? hi_v.as_int()
                                                : static_cast<std::int64_t>(hi_v.as_real());
                if (lo > hi)
                    throw InvalidParameter("DiscreteUniform bounds inverted in rule '" +
                                           r.name + "'");
                if (hi - lo + 1 > 4096)
                    throw NotCountBased("DiscreteUniform support too large in rule '" +
                                        r.name + "'");
                double prob = 1.0 / static_cast<double>(hi - lo + 1);
                for (std::int64_t v = lo; v <= hi; ++v) recurse(v, prob);
                break;
            }
            default:
                throw NotCountBased("continuous fresh distribution in rule '" + r.name + "'");
        }
        // Rebind happens on the next outcome; nothing to clean up (values are
        // overwritten and the recursion fully owns env_ at this depth).
    }

    void emit_target(double rate) {
        const Rule& r = *rule_;
        CountState target = *state_;
        for (std::size_t p = 0; p < r.lhs.size(); ++p) target[assignment_[p]] -= 1;
        for (const TermTemplate& t : r.rhs) {
            int ctor = space_ctor(t.ctor);
            const SpeciesDecl& d = space_->grammar->species[ctor];
            std::vector<std::int64_t> vals(t.slots.size());
            for (std::size_t i = 0; i < t.slots.size(); ++i) {
                Value v = eval(t.slots[i], env_);
                std::int64_t x;
                if (v.is_int()) {
                    x = v.as_int();
                } else {
                    double d2 = v.as_real();
                    if (d2 != std::floor(d2))
                        throw DomainError(t.loc, "non-integer value for int slot in rule '" +
                                                     r.name + "'");
                    x = static_cast<std::int64_t>(d2);
                }
                // Out of the declared domain: reflecting truncation, drop.
                if (x < *d.slots[i].sort.lo || x > *d.slots[i].sort.hi) return;
                vals[i] = x;
            }
            int ci = space_->find_class(ctor, vals);
            if (ci < 0) return;
            target[ci] += 1;
        }
        if (!within_caps(*space_, target)) return;
        if (target == *state_) return;  // self-loop: no effect on the master equation
        (*sink_)(r, target, rate);
    }
};

}  // namespace

int CountSpace::find_class(int ctor, const std::vector<std::int64_t>& vals) const {
    auto it = class_index.find({ctor, vals});
    return it == class_index.end() ? -1 : it->second;
}

int CountSpace::find_state(const CountState& s) const {
    auto it = state_index.find(s);
    return it == state_index.end() ? -1 : it->second;
}

std::string CountSpace::class_label(int ci) const {
    const CountClass& c = classes[ci];
    std::string s = grammar->species[c.ctor].name + "[";
    for (std::size_t i = 0; i < c.vals.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(c.vals[i]);
    }
    return s + "]";
}

bool CountSpace::state_on_boundary(const CountState& s) const {
    auto totals = per_species_totals(*this, s);
    for (std::size_t i = 0; i < totals.size(); ++i) {
        if (totals[i] == caps.cap_for(grammar->species[i].name)) return true;
    }
    return false;
}

CountSpace enumerate_states(const Grammar& g, const std::vector<TermInit>& seed,
                            const Caps& caps) {
    require_count_based(g);
    CountSpace space;
    space.grammar = &g;
    space.caps = caps;

    // All (species x valuation) classes, declaration order then lexicographic.
    for (std::size_t si = 0; si < g.species.size(); ++si) {
        const SpeciesDecl& d = g.species[si];
        std::vector<std::int64_t> vals;
        std::function<void(std::size_t)> rec = [&](std::size_t slot) {
            if (slot == d.slots.size()) {
                space.class_index.emplace(std::make_pair(static_cast<int>(si), vals),
                                          static_cast<int>(space.classes.size()));
                space.classes.push_back({static_cast<int>(si), vals});
                return;
            }
            for (std::int64_t v = *d.slots[slot].sort.lo; v <= *d.slots[slot].sort.hi; ++v) {
                vals.push_back(v);
                rec(slot + 1);
                vals.pop_back();
            }
        };
        rec(0);
        if (space.classes.size() > 100000)
            throw CapTooLarge("declared parameter domains enumerate too many classes");
    }

    // Seed state.
    CountState s0(space.classes.size(), 0);
    for (const TermInit& t : seed) {
        int ctor = g.species_index(t.ctor);
        if (ctor < 0) throw SortError({}, "undeclared constructor '" + t.ctor + "'");
        std::vector<std::int64_t> vals;
        for (const Value& v : t.params) vals.push_back(v.as_int());
        int ci = space.find_class(ctor, vals);
        if (ci < 0)
            throw InvalidParameter("seed term " + t.ctor + " has out-of-domain parameters");
        s0[ci] += 1;
    }
    if (!within_caps(space, s0)) throw InvalidParameter("seed state exceeds the caps");

    space.states.push_back(s0);
    space.state_index.emplace(s0, 0);
    TransitionEnumerator enumerator(space, g);
    std::deque<int> queue{0};
    while (!queue.empty()) {
        int si = queue.front();
        queue.pop_front();
        CountState current = space.states[si];
        enumerator.enumerate(current, [&](const Rule&, const CountState& target, double) {
            if (space.state_index.count(target)) return;
            if (space.states.size() >= space.caps.max_states)
                throw CapTooLarge("state space exceeds " +
                                  std::to_string(space.caps.max_states) + " states");
            space.state_index.emplace(target, static_cast<int>(space.states.size()));
            space.states.push_back(target);
            queue.push_back(static_cast<int>(space.states.size()) - 1);
        });
    }
    return space;
}

GeneratorMatrix build_generator(const Grammar& rules_from, const CountSpace& space,
                                bool keep_contributions) {
    require_count_based(rules_from);
    GeneratorMatrix W;
    W.n = static_cast<int>(space.states.size());

    // Exact per-entry accumulation; one multiplicity unit per appended term
    // so that merged multiplicities reproduce concatenated contribution lists.
    std::map<std::pair<int, int>, Expansion> entries;
    std::vector<Expansion> col_outflow(space.states.size());
    TransitionEnumerator enumerator(space, rules_from);
    for (int col = 0; col < W.n; ++col) {
        enumerator.enumerate(space.states[col],
                             [&](const Rule& r, const CountState& target, double rate) {
                                 int row = space.find_state(target);
                                 if (row < 0) return;  // outside the truncated space
                                 auto key = std::make_pair(row, col);
                                 Expansion& e = entries[key];
                                 for (std::int64_t m = 0; m < r.multiplicity; ++m) {
                                     e.add(rate);
                                     col_outflow[col].add(rate);
                                     if (keep_contributions)
                                         W.contributions[key].push_back(rate);
                                 }
                             });
    }
    for (int col = 0; col < W.n; ++col) {
        if (col_outflow[col].is_zero()) continue;
        Expansion neg;
        neg.add_negated(col_outflow[col]);
        entries[{col, col}] = std::move(neg);
    }

    // Materialize as CSR over rows.
    W.row_ptr.assign(W.n + 1, 0);
    for (const auto& [key, e] : entries) {
        (void)e;
        W.row_ptr[key.first + 1] += 1;
    }
    for (int i = 0; i < W.n; ++i) W.row_ptr[i + 1] += W.row_ptr[i];
    W.col_idx.resize(entries.size());
    W.vals.resize(entries.size());
    std::vector<std::int32_t> cursor(W.row_ptr.begin(), W.row_ptr.end() - 1);
    for (const auto& [key, e] : entries) {
        std::int32_t pos = cursor[key.first]++;
        W.col_idx[pos] = key.second;
        W.vals[pos] = e.round();
    }
    return W;
}

double GeneratorMatrix::entry(int row, int col) const {
    for (std::int32_t k = row_ptr[row]; k < row_ptr[row + 1]; ++k) {
        if (col_idx[k] == col) return vals[k];
    }
    return 0.0;
}

double GeneratorMatrix::max_exit_rate() const {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m = std::max(m, -entry(i, i));
    return m;
}

std::vector<double> GeneratorMatrix::column_sums() const {
    std::vector<double> sums(n, 0.0);
    for (int row = 0; row < n; ++row) {
        for (std::int32_t k = row_ptr[row]; k < row_ptr[row + 1]; ++k)
            sums[col_idx[k]] += vals[k];
    }
    return sums;
}

std::vector<double> transient_distribution(const GeneratorMatrix& W, std::vector<double> p0,
                                           double t, double tol) {
    if (static_cast<int>(p0.size()) != W.n)
        throw InvalidParameter("p0 dimension does not match the state space");
    if (t < 0) throw InvalidParameter("t must be >= 0");
    if (!(tol > 0)) throw InvalidParameter("tol must be positive");
    if (t == 0.0 || W.n == 0) return p0;
    double gamma = W.max_exit_rate();
    if (gamma <= 0.0) return p0;

    const std::size_t n = p0.size();
    double tau = gamma * t;
    double log_tau = std::log(tau);
    std::vector<double> v = p0;
    std::vector<double> wv(n, 0.0);
    std::vector<double> next(n, 0.0);
    std::vector<double> p(n, 0.0);
    double cum = 0.0;
    const std::int64_t k_hard =
        static_cast<std::int64_t>(tau + 12.0 * std::sqrt(tau + 1.0) + 64.0);
    for (std::int64_t k = 0; k <= k_hard; ++k) {
        double log_w = static_cast<double>(k) * log_tau - tau - std::lgamma(k + 1.0);
        double w = std::exp(log_w);
        if (w > 0.0) {
            kernels::axpy(w, v.data(), p.data(), n);
            cum += w;
        }
        if (cum >= 1.0 - 0.5 * tol) break;
        if (k == k_hard)
            throw Error("uniformization failed to reach the requested tolerance");
        // v <- v + (1/gamma) W v
        kernels::spmv_csr(n, W.row_ptr.data(), W.col_idx.data(), W.vals.data(), v.data(),
                          wv.data());
        kernels::add_scaled(v.data(), 1.0 / gamma, wv.data(), next.data(), n);
        v.swap(next);
    }
    for (double& x : p) {
        if (x < 0.0) x = 0.0;  // rounding fuzz
    }
    return p;
}

CompositionReport check_compositionality(const Grammar& g1, const Grammar& g2,
                                         const std::vector<TermInit>& seed, const Caps& caps) {
    Grammar composed = compose(g1, g2);
    CountSpace space = enumerate_states(composed, seed, caps);
    GeneratorMatrix wc = build_generator(composed, space, true);
    GeneratorMatrix w1 = build_generator(g1, space, true);
    GeneratorMatrix w2 = build_generator(g2, space, true);

    CompositionReport report;
    report.n_states = static_cast<int>(space.states.size());

    // Exact residual on the off-diagonal contribution lists, plus the derived
    // diagonals.
    std::map<std::pair<int, int>, Expansion> residual;
    std::vector<Expansion> diag(space.states.size());
    auto fold = [&](const GeneratorMatrix& w, double sign) {
        for (const auto& [key, list] : w.contributions) {
            for (double c : list) {
                residual[key].add(sign * c);
                diag[key.second].add(-sign * c);
            }
        }
    };
    fold(wc, +1.0);
    fold(w1, -1.0);
    fold(w2, -1.0);
    for (const auto& [key, e] : residual)
        report.max_exact_residual =
            std::max(report.max_exact_residual, std::abs(e.round()));
    for (const Expansion& e : diag)
        report.max_exact_residual =
            std::max(report.max_exact_residual, std::abs(e.round()));

    // Double-level residual over the materialized matrices.
    std::set<std::pair<int, int>> keys;
    auto collect = [&keys](const GeneratorMatrix& w) {
        for (int row = 0; row < w.n; ++row) {
            for (std::int32_t k = w.row_ptr[row]; k < w.row_ptr[row + 1]; ++k)
                keys.insert({row, w.col_idx[k]});
        }
    };
    collect(wc);
    collect(w1);
    collect(w2);
    for (const auto& [row, col] : keys) {
        double d = wc.entry(row, col) - w1.entry(row, col) - w2.entry(row, col);
        report.max_double_residual = std::max(report.max_double_residual, std::abs(d));
    }
    return report;
}

double boundary_mass(const CountSpace& space, const std::vector<double>& p) {
    double mass = 0.0;
    for (std::size_t i = 0; i < space.states.size(); ++i) {
        if (space.state_on_boundary(space.states[i])) mass += p[i];
    }
    return mass;
}

int state_index_of_terms(const CountSpace& space, const std::vector<Term>& terms) {
    CountState s(space.classes.size(), 0);
    for (const Term& t : terms) {
        // Terms come from a simulation of the same grammar text: map by the
        // species name so index conventions cannot drift.
        if (t.ctor < 0) return -1;
        std::vector<std::int64_t> vals;
        for (const Value& v : t.params) {
            if (!v.is_int()) return -1;
            vals.push_back(v.as_int());
        }
        int ci = space.find_class(t.ctor, vals);
        if (ci < 0) return -1;
        s[ci] += 1;
    }
    return space.find_state(s);
}

void write_generator_triplets(std::ostream& os, const GeneratorMatrix& W) {
    for (int row = 0; row < W.n; ++row) {
        for (std::int32_t k = W.row_ptr[row]; k < W.row_ptr[row + 1]; ++k)
            os << row << " " << W.col_idx[k] << " " << format_real(W.vals[k]) << "\n";
    }
}

std::string state_legend_json(const CountSpace& space) {
    std::ostringstream os;
    os << "[";
    for (std::size_t si = 0; si < space.states.size(); ++si) {
        if (si) os << ",";
        os << "{\"index\":" << si << ",\"state\":[";
        bool first = true;
        for (std::size_t ci = 0; ci < space.classes.size(); ++ci) {
            if (space.states[si][ci] == 0) continue;
            if (!first) os << ",";
            first = false;
            os << "[\"" << space.class_label(ci) << "\"," << space.states[si][ci] << "]";
        }
        os << "]}";
    }
    os << "]";
    return os.str();
}

}  // namespace dgx
