#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dgx/grammar.hpp"

namespace dgx {

using TermId = std::uint64_t;

struct Term {
    TermId id = 0;
    int ctor = -1;
    std::vector<Value> params;
};

// An injective binding of one rule's LHS patterns to distinct live terms.
// ids[i] is the term bound to pattern i; enabled_at is the store time at
// which the binding first became valid (the non-Markovian age clock).
struct Match {
    int rule_index = -1;
    std::vector<TermId> ids;
    double enabled_at = 0.0;
};

struct TermInit {
    std::string ctor;
    std::vector<Value> params;
};

struct RewriteDelta {
    std::vector<Term> removed;  // with pre-event params
    std::vector<Term> created;
};

// The mutable system state: a multiset of terms plus an incrementally
// maintained match index for every rule of the loaded grammar. Confined to
// one simulation run; not thread-safe.
class TermStore {
public:
    explicit TermStore(const Grammar& g);

    const Grammar& grammar() const { return *grammar_; }

    double time() const { return time_; }
    void set_time(double t) { time_ = t; }

    TermId insert(const std::string& ctor, std::vector<Value> params);
    TermId insert(int ctor_index, std::vector<Value> params);
    // Replay path: inserts with a caller-chosen id.
    void insert_with_id(TermId id, int ctor_index, std::vector<Value> params);
    void remove(TermId id);

    // Updates one parameter in place. Deliberately does not touch the match
    // index: continuous (ODE) motion neither retires matches nor resets
    // their age clocks.
    void set_param(TermId id, std::size_t slot, Value v);

    bool is_live(TermId id) const { return terms_.count(id) != 0; }
    const Term& term(TermId id) const;
    std::size_t size() const { return terms_.size(); }

    // All matches of one rule, ordered by bound-id tuple.
    std::vector<Match> matches(int rule_index) const;
    std::size_t match_count(int rule_index) const {
        if (grammar_->rules[rule_index].lhs.empty()) return 1;
        return index_[rule_index].size();
    }
    std::optional<Match> find_match(int rule_index, const std::vector<TermId>& ids) const;

    // Variable environment induced by a match, reading current term params.
    Env make_env(const Match& m) const;

    // Applies one jump-rule match atomically: evaluates all RHS templates in
    // env + fresh_values first (the store is untouched if evaluation fails),
    // then removes the LHS terms and inserts the instantiated RHS terms.
    RewriteDelta apply_rewrite(const Match& m,
                               const std::vector<std::pair<std::string, Value>>& fresh_values);

    // Replay path: re-applies a recorded delta without re-evaluating
    // templates. Throws ReplayMismatch if the consumed ids are not live.
    void apply_recorded(const std::vector<Term>& consumed, const std::vector<Term>& produced);

    // Terms sorted by id.
    std::vector<Term> dump() const;
    void load(const std::vector<TermInit>& init);
    void load_terms(const std::vector<Term>& terms);  // replay: keeps ids

    // From-scratch match enumeration; independent of the incremental path.
    std::vector<Match> enumerate_matches_scratch(int rule_index) const;

    // Verifies that the per-constructor index matches the live set and that
    // the incremental match index equals from-scratch enumeration for every
    // rule. Throws Error with a description on any mismatch.
    void audit() const;

private:
    const Grammar* grammar_;
    std::map<TermId, Term> terms_;
    std::vector<std::vector<TermId>> by_ctor_;  // sorted
    // Per rule: bound-id tuple -> enabled_at.
    mutable std::vector<std::map<std::vector<TermId>, double>> index_;
    std::map<TermId, std::vector<std::pair<int, std::vector<TermId>>>> backrefs_;
    double time_ = 0.0;
    TermId next_id_ = 1;

    void check_sorts(int ctor_index, const std::vector<Value>& params, SourceLoc loc) const;
    void link_term(const Term& t);
    void add_match(int rule_index, std::vector<TermId> ids);
    // Enumerates injective bindings of rule `ri`. If fixed_pos >= 0, pattern
    // fixed_pos is bound to fixed_id and no other position may use it.
    void enumerate_bindings(int ri, int fixed_pos, TermId fixed_id,
                            std::vector<std::vector<TermId>>& out) const;
};

// Converts an evaluated template value to a slot sort. Real values must be
// integral to land in int slots; vectors must match the declared dimension.
Value convert_to_sort(const Value& v, const Sort& sort, int dim, SourceLoc loc);

}  // namespace dgx
