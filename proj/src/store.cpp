#include "dgx/store.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dgx {

Value convert_to_sort(const Value& v, const Sort& sort, int dim, SourceLoc loc) {
    switch (sort.kind) {
        case SortKind::Int: {
            if (v.is_int()) return v;
            if (v.is_real()) {
                double x = v.as_real();
                if (x != std::floor(x))
                    throw DomainError(loc, "non-integer value " + format_real(x) +
                                               " for int slot");
                return Value(static_cast<std::int64_t>(x));
            }
            throw DomainError(loc, "vector value for int slot");
        }
        case SortKind::Real:
            if (v.is_vec()) throw DomainError(loc, "vector value for real slot");
            return Value(v.as_real());
        case SortKind::Vec: {
            if (!v.is_vec()) throw DomainError(loc, "scalar value for vec slot");
            if (static_cast<int>(v.as_vec().size()) != dim)
                throw DomainError(loc, "vector of dimension " +
                                           std::to_string(v.as_vec().size()) + " for vec(" +
                                           std::to_string(dim) + ") slot");
            return v;
        }
    }
    throw DomainError(loc, "unknown sort");
}

TermStore::TermStore(const Grammar& g) : grammar_(&g) {
    by_ctor_.resize(g.species.size());
    index_.resize(g.rules.size());
}

void TermStore::check_sorts(int ctor_index, const std::vector<Value>& params,
                            SourceLoc loc) const {
    if (ctor_index < 0 || ctor_index >= static_cast<int>(grammar_->species.size()))
        throw SortError(loc, "unknown constructor index");
    const SpeciesDecl& d = grammar_->species[ctor_index];
    if (params.size() != d.slots.size())
        throw SortError(loc, d.name + " takes " + std::to_string(d.slots.size()) +
                                 " parameters, got " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Sort& s = d.slots[i].sort;
        const Value& v = params[i];
        bool ok = (s.kind == SortKind::Int && v.is_int()) ||
                  (s.kind == SortKind::Real && v.is_real()) ||
                  (s.kind == SortKind::Vec && v.is_vec() &&
                   static_cast<int>(v.as_vec().size()) == grammar_->dim);
        if (!ok)
            throw SortError(loc, "parameter " + std::to_string(i) + " of " + d.name +
                                     " has wrong sort (" + v.describe() + ")");
    }
}

TermId TermStore::insert(const std::string& ctor, std::vector<Value> params) {
    int ci = grammar_->species_index(ctor);
    if (ci < 0) throw SortError({}, "undeclared constructor '" + ctor + "'");
    return insert(ci, std::move(params));
}

TermId TermStore::insert(int ctor_index, std::vector<Value> params) {
    check_sorts(ctor_index, params, {});
    Term t{next_id_++, ctor_index, std::move(params)};
    TermId id = t.id;
    terms_.emplace(id, std::move(t));
    link_term(terms_.at(id));
    return id;
}

void TermStore::insert_with_id(TermId id, int ctor_index, std::vector<Value> params) {
    if (terms_.count(id)) throw ReplayMismatch("term id " + std::to_string(id) + " already live");
    check_sorts(ctor_index, params, {});
    Term t{id, ctor_index, std::move(params)};
    terms_.emplace(id, std::move(t));
    next_id_ = std::max(next_id_, id + 1);
    link_term(terms_.at(id));
}

void TermStore::link_term(const Term& t) {
    auto& vec = by_ctor_[t.ctor];
    vec.insert(std::upper_bound(vec.begin(), vec.end(), t.id), t.id);
    // New matches are exactly the bindings that use this term (injectivity
    // means it occupies exactly one position).
    for (std::size_t ri = 0; ri < grammar_->rules.size(); ++ri) {
        const Rule& r = grammar_->rules[ri];
        std::vector<std::vector<TermId>> found;
        for (std::size_t p = 0; p < r.lhs.size(); ++p) {
            if (r.lhs[p].ctor_index != t.ctor) continue;
            enumerate_bindings(static_cast<int>(ri), static_cast<int>(p), t.id, found);
        }
        for (auto& ids : found) add_match(static_cast<int>(ri), std::move(ids));
    }
}

void TermStore::add_match(int rule_index, std::vector<TermId> ids) {
    auto [it, inserted] = index_[rule_index].emplace(std::move(ids), time_);
    if (!inserted) return;
    for (TermId id : it->first) backrefs_[id].emplace_back(rule_index, it->first);
}

void TermStore::remove(TermId id) {
    auto it = terms_.find(id);
    if (it == terms_.end()) throw UnknownTerm(id);
    auto& vec = by_ctor_[it->second.ctor];
    vec.erase(std::lower_bound(vec.begin(), vec.end(), id));
    auto br = backrefs_.find(id);
    if (br != backrefs_.end()) {
        for (const auto& [ri, key] : br->second) index_[ri].erase(key);
        // Matches retired here may still be referenced from other bound
        // terms' backrefs; those entries are ignored lazily on erase.
        backrefs_.erase(br);
    }
    terms_.erase(it);
}

void TermStore::set_param(TermId id, std::size_t slot, Value v) {
    auto it = terms_.find(id);
    if (it == terms_.end()) throw UnknownTerm(id);
    const SpeciesDecl& d = grammar_->species[it->second.ctor];
    if (slot >= d.slots.size()) throw SortError({}, "slot index out of range");
    it->second.params[slot] = convert_to_sort(v, d.slots[slot].sort, grammar_->dim, {});
}

const Term& TermStore::term(TermId id) const {
    auto it = terms_.find(id);
    if (it == terms_.end()) throw UnknownTerm(id);
    return it->second;
}

namespace {

// Literal and intra-pattern repeated-variable tests for one candidate term.
bool alpha_ok(const TermPattern& pat, const Term& t) {
    if (pat.ctor_index != t.ctor) return false;
    for (std::size_t i = 0; i < pat.slots.size(); ++i) {
        const PatternSlot& s = pat.slots[i];
        if (s.kind == PatternSlot::Kind::Literal) {
            if (!(t.params[i] == s.literal)) return false;
        } else {
            for (std::size_t j = 0; j < i; ++j) {
                const PatternSlot& prev = pat.slots[j];
                if (prev.kind == PatternSlot::Kind::Var && prev.var == s.var &&
                    !(t.params[j] == t.params[i]))
                    return false;
            }
        }
    }
    return true;
}

}  // namespace

void TermStore::enumerate_bindings(int ri, int fixed_pos, TermId fixed_id,
                                   std::vector<std::vector<TermId>>& out) const {
    const Rule& r = grammar_->rules[ri];
    const std::size_t k = r.lhs.size();
    if (k == 0) return;  // empty LHS handled by callers (one empty binding)

    std::vector<TermId> chosen(k, 0);
    std::vector<std::pair<std::string, Value>> bound;  // cross-pattern variable bindings

    auto bind_vars = [&](const TermPattern& pat, const Term& t, std::size_t depth_mark,
                         bool& ok) {
        ok = true;
        for (std::size_t i = 0; i < pat.slots.size(); ++i) {
            const PatternSlot& s = pat.slots[i];
            if (s.kind != PatternSlot::Kind::Var) continue;
            bool found = false;
            for (std::size_t b = 0; b < bound.size(); ++b) {
                if (bound[b].first == s.var) {
                    found = true;
                    if (!(bound[b].second == t.params[i])) ok = false;
                    break;
                }
            }
            if (!ok) break;
            if (!found) bound.emplace_back(s.var, t.params[i]);
        }
        (void)depth_mark;
    };

    std::function<void(std::size_t)> rec = [&](std::size_t pos) {
        if (pos == k) {
            out.push_back(chosen);
            return;
        }
        const TermPattern& pat = r.lhs[pos];
        auto try_term = [&](TermId id) {
            if (fixed_pos >= 0 && pos != static_cast<std::size_t>(fixed_pos) && id == fixed_id)
                return;  // other positions must use pre-existing terms
            for (std::size_t q = 0; q < pos; ++q) {
                if (chosen[q] == id) return;  // injectivity
            }
            const Term& t = terms_.at(id);
            if (!alpha_ok(pat, t)) return;
            std::size_t mark = bound.size();
            bool ok = false;
            bind_vars(pat, t, mark, ok);
            if (ok) {
                chosen[pos] = id;
                rec(pos + 1);
            }
            bound.resize(mark);
        };
        if (fixed_pos >= 0 && pos == static_cast<std::size_t>(fixed_pos)) {
            try_term(fixed_id);
        } else {
            for (TermId id : by_ctor_[pat.ctor_index]) try_term(id);
        }
    };
    rec(0);
}

std::vector<Match> TermStore::matches(int rule_index) const {
    std::vector<Match> out;
    // An empty LHS always has exactly one (empty) binding, enabled since t=0.
    if (grammar_->rules[rule_index].lhs.empty()) {
        out.push_back(Match{rule_index, {}, 0.0});
        return out;
    }
    out.reserve(index_[rule_index].size());
    for (const auto& [ids, enabled_at] : index_[rule_index])
        out.push_back(Match{rule_index, ids, enabled_at});
    return out;
}

std::optional<Match> TermStore::find_match(int rule_index,
                                           const std::vector<TermId>& ids) const {
    if (grammar_->rules[rule_index].lhs.empty()) {
        if (!ids.empty()) return std::nullopt;
        return Match{rule_index, {}, 0.0};
    }
    const auto& m = index_[rule_index];
    auto it = m.find(ids);
    if (it == m.end()) return std::nullopt;
    return Match{rule_index, it->first, it->second};
}

Env TermStore::make_env(const Match& m) const {
    Env env(&grammar_->constants);
    const Rule& r = grammar_->rules[m.rule_index];
    for (std::size_t p = 0; p < r.lhs.size(); ++p) {
        const Term& t = term(m.ids[p]);
        const TermPattern& pat = r.lhs[p];
        for (std::size_t i = 0; i < pat.slots.size(); ++i) {
            if (pat.slots[i].kind == PatternSlot::Kind::Var)
                env.bind(pat.slots[i].var, t.params[i]);
        }
    }
    return env;
}

RewriteDelta TermStore::apply_rewrite(
    const Match& m, const std::vector<std::pair<std::string, Value>>& fresh_values) {
    const Rule& r = grammar_->rules[m.rule_index];
    for (TermId id : m.ids) {
        if (!is_live(id))
            throw StaleMatch("match binds dead term id " + std::to_string(id));
    }
    Env env = make_env(m);
    for (const auto& [name, v] : fresh_values) env.bind(name, v);

    // Evaluate every template before touching the store.
    std::vector<std::vector<Value>> new_params;
    new_params.reserve(r.rhs.size());
    for (const TermTemplate& t : r.rhs) {
        std::vector<Value> params;
        params.reserve(t.slots.size());
        const SpeciesDecl& d = grammar_->species[t.ctor_index];
        for (std::size_t i = 0; i < t.slots.size(); ++i) {
            Value v = eval(t.slots[i], env);
            params.push_back(convert_to_sort(v, d.slots[i].sort, grammar_->dim, t.loc));
        }
        new_params.push_back(std::move(params));
    }

    RewriteDelta delta;
    for (TermId id : m.ids) {
        delta.removed.push_back(term(id));
        remove(id);
    }
    for (std::size_t i = 0; i < r.rhs.size(); ++i) {
        TermId id = insert(r.rhs[i].ctor_index, std::move(new_params[i]));
        delta.created.push_back(term(id));
    }
    return delta;
}

void TermStore::apply_recorded(const std::vector<Term>& consumed,
                               const std::vector<Term>& produced) {
    for (const Term& t : consumed) {
        if (!is_live(t.id))
            throw ReplayMismatch("recorded event consumes dead term id " +
                                 std::to_string(t.id));
        if (term(t.id).ctor != t.ctor)
            throw ReplayMismatch("recorded event consumes term id " + std::to_string(t.id) +
                                 " with mismatched constructor");
    }
    for (const Term& t : consumed) remove(t.id);
    for (const Term& t : produced) insert_with_id(t.id, t.ctor, t.params);
}

std::vector<Term> TermStore::dump() const {
    std::vector<Term> out;
    out.reserve(terms_.size());
    for (const auto& [id, t] : terms_) out.push_back(t);
    return out;
}

void TermStore::load(const std::vector<TermInit>& init) {
    for (const TermInit& t : init) insert(t.ctor, t.params);
}

void TermStore::load_terms(const std::vector<Term>& terms) {
    for (const Term& t : terms) insert_with_id(t.id, t.ctor, t.params);
}

std::vector<Match> TermStore::enumerate_matches_scratch(int rule_index) const {
    std::vector<Match> out;
    const Rule& r = grammar_->rules[rule_index];
    if (r.lhs.empty()) {
        out.push_back(Match{rule_index, {}, 0.0});
        return out;
    }
    std::vector<std::vector<TermId>> found;
    enumerate_bindings(rule_index, -1, 0, found);
    std::sort(found.begin(), found.end());
    for (auto& ids : found) {
        auto known = find_match(rule_index, ids);
        out.push_back(Match{rule_index, std::move(ids),
                            known ? known->enabled_at : time_});
    }
    return out;
}

void TermStore::audit() const {
    // Per-constructor index mirrors the live set.
    std::size_t indexed = 0;
    for (std::size_t ci = 0; ci < by_ctor_.size(); ++ci) {
        indexed += by_ctor_[ci].size();
        for (TermId id : by_ctor_[ci]) {
            auto it = terms_.find(id);
            if (it == terms_.end() || it->second.ctor != static_cast<int>(ci))
                throw Error("audit: constructor index lists term " + std::to_string(id) +
                            " which is dead or mis-filed");
        }
    }
    if (indexed != terms_.size())
        throw Error("audit: constructor index size mismatch");
    // Incremental match index equals from-scratch enumeration.
    for (std::size_t ri = 0; ri < grammar_->rules.size(); ++ri) {
        if (grammar_->rules[ri].lhs.empty()) continue;
        std::vector<std::vector<TermId>> scratch;
        enumerate_bindings(static_cast<int>(ri), -1, 0, scratch);
        std::sort(scratch.begin(), scratch.end());
        const auto& inc = index_[ri];
        if (scratch.size() != inc.size())
            throw Error("audit: rule '" + grammar_->rules[ri].name + "' has " +
                        std::to_string(inc.size()) + " incremental matches vs " +
                        std::to_string(scratch.size()) + " from scratch");
        std::size_t i = 0;
        for (const auto& [ids, enabled_at] : inc) {
            (void)enabled_at;
            if (ids != scratch[i])
                throw Error("audit: rule '" + grammar_->rules[ri].name +
                            "' match set diverged from scratch enumeration");
            ++i;
        }
    }
}

}  // namespace dgx
