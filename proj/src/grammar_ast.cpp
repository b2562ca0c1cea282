#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "dgx/grammar.hpp"

namespace dgx {

namespace {

bool expr_references_var(const ExprNode* n, std::string_view name) {
    if (!n) return false;
    if (n->kind == ExprNode::Kind::VarRef && n->name == name) return true;
    for (const auto& a : n->args) {
        if (expr_references_var(a.get(), name)) return true;
    }
    return false;
}

void collect_var_refs(const ExprNode* n, std::set<std::string>& out) {
    if (!n) return;
    if (n->kind == ExprNode::Kind::VarRef) out.insert(n->name);
    for (const auto& a : n->args) collect_var_refs(a.get(), out);
}

// --- canonical renaming (for structural rule equality) ----------------------

Expr rename_expr(const Expr& e, const std::map<std::string, std::string>& m) {
    const ExprNode* n = e.get();
    if (!n) return e;
    if (n->kind == ExprNode::Kind::VarRef) {
        auto it = m.find(n->name);
        if (it == m.end()) return e;
        auto c = std::make_shared<ExprNode>(*n);
        c->name = it->second;
        return Expr(std::move(c));
    }
    if (n->args.empty()) return e;
    auto c = std::make_shared<ExprNode>(*n);
    for (auto& a : c->args) a = rename_expr(Expr(a), m).share();
    return Expr(std::move(c));
}

Rule canonical_rule(const Rule& r) {
    std::map<std::string, std::string> m;
    int next = 0;
    for (const TermPattern& p : r.lhs) {
        for (const PatternSlot& s : p.slots) {
            if (s.kind == PatternSlot::Kind::Var && !m.count(s.var))
                m.emplace(s.var, "v" + std::to_string(next++));
        }
    }
    int fresh_next = 0;
    for (const FreshVar& f : r.fresh) {
        if (!m.count(f.name)) m.emplace(f.name, "f" + std::to_string(fresh_next++));
    }
    Rule c = r;
    c.name.clear();
    c.multiplicity = 1;
    for (TermPattern& p : c.lhs) {
        for (PatternSlot& s : p.slots) {
            if (s.kind == PatternSlot::Kind::Var) s.var = m.at(s.var);
            s.const_name.clear();
        }
    }
    for (TermTemplate& t : c.rhs)
        for (Expr& e : t.slots) e = rename_expr(e, m);
    if (!c.propensity.empty()) c.propensity = rename_expr(c.propensity, m);
    for (FreshVar& f : c.fresh) {
        f.name = m.at(f.name);
        for (Expr& e : f.dist.params) e = rename_expr(e, m);
    }
    for (Derivative& d : c.derivatives) {
        auto it = m.find(d.target);
        if (it != m.end()) d.target = it->second;
        d.rhs = rename_expr(d.rhs, m);
    }
    return c;
}

bool expr_equal(const ExprNode* a, const ExprNode* b) {
    if (a == b) return true;
    if (!a || !b) return false;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
        case ExprNode::Kind::Literal:
            if (a->literal != b->literal || a->literal_is_int != b->literal_is_int) return false;
            break;
        case ExprNode::Kind::ConstRef:
        case ExprNode::Kind::VarRef:
            if (a->name != b->name) return false;
            break;
        case ExprNode::Kind::Binary:
            if (a->op != b->op) return false;
            break;
        case ExprNode::Kind::Call:
            if (a->fn != b->fn) return false;
            break;
        case ExprNode::Kind::Member:
            if (a->member_set != b->member_set || a->member_is_int != b->member_is_int)
                return false;
            break;
        case ExprNode::Kind::Neg:
            break;
    }
    if (a->args.size() != b->args.size()) return false;
    for (std::size_t i = 0; i < a->args.size(); ++i) {
        if (!expr_equal(a->args[i].get(), b->args[i].get())) return false;
    }
    return true;
}

bool expr_equal(const Expr& a, const Expr& b) { return expr_equal(a.get(), b.get()); }

bool patterns_equal(const TermPattern& a, const TermPattern& b) {
    if (a.ctor != b.ctor || a.slots.size() != b.slots.size()) return false;
    for (std::size_t i = 0; i < a.slots.size(); ++i) {
        const auto& x = a.slots[i];
        const auto& y = b.slots[i];
        if (x.kind != y.kind) return false;
        if (x.kind == PatternSlot::Kind::Var) {
            if (x.var != y.var) return false;
        } else if (x.literal != y.literal) {
            return false;
        }
    }
    return true;
}

bool canonical_rules_equal(const Rule& a, const Rule& b) {
    if (a.kind != b.kind) return false;
    if (a.lhs.size() != b.lhs.size() || a.rhs.size() != b.rhs.size()) return false;
    for (std::size_t i = 0; i < a.lhs.size(); ++i) {
        if (!patterns_equal(a.lhs[i], b.lhs[i])) return false;
    }
    for (std::size_t i = 0; i < a.rhs.size(); ++i) {
        if (a.rhs[i].ctor != b.rhs[i].ctor) return false;
        if (a.rhs[i].slots.size() != b.rhs[i].slots.size()) return false;
        for (std::size_t j = 0; j < a.rhs[i].slots.size(); ++j) {
            if (!expr_equal(a.rhs[i].slots[j], b.rhs[i].slots[j])) return false;
        }
    }
    if (a.kind == RuleKind::Jump) {
        if (!expr_equal(a.propensity, b.propensity)) return false;
        if (a.fresh.size() != b.fresh.size()) return false;
        for (std::size_t i = 0; i < a.fresh.size(); ++i) {
            const auto& x = a.fresh[i];
            const auto& y = b.fresh[i];
            if (x.name != y.name || x.dist.family != y.dist.family || x.is_vec != y.is_vec)
                return false;
            if (x.dist.params.size() != y.dist.params.size()) return false;
            for (std::size_t j = 0; j < x.dist.params.size(); ++j) {
                if (!expr_equal(x.dist.params[j], y.dist.params[j])) return false;
            }
        }
    } else {
        if (a.derivatives.size() != b.derivatives.size()) return false;
        for (std::size_t i = 0; i < a.derivatives.size(); ++i) {
            if (a.derivatives[i].target != b.derivatives[i].target) return false;
            if (!expr_equal(a.derivatives[i].rhs, b.derivatives[i].rhs)) return false;
        }
    }
    return true;
}

}  // namespace

bool Grammar::uses_age() const {
    for (const Rule& r : rules) {
        if (r.kind == RuleKind::Jump && expr_references_var(r.propensity.get(), "age"))
            return true;
    }
    return false;
}

bool rules_structurally_equal(const Rule& a, const Rule& b) {
    return canonical_rules_equal(canonical_rule(a), canonical_rule(b));
}

std::string format_diagnostics(const std::vector<Diagnostic>& ds, const std::string& filename) {
    std::ostringstream os;
    for (const auto& d : ds)
        os << filename << ":" << d.loc.line << ":" << d.loc.col << ": " << d.message << "\n";
    return os.str();
}

std::vector<Diagnostic> validate(const Grammar& g) {
    std::vector<Diagnostic> out;
    auto diag = [&out](SourceLoc loc, std::string msg) {
        out.push_back({loc, std::move(msg)});
    };

    for (const Rule& r : g.rules) {
        // Pattern variables and their sorts (parser guarantees consistency).
        std::map<std::string, Sort> lhs_vars;
        for (const TermPattern& p : r.lhs) {
            for (std::size_t i = 0; i < p.slots.size(); ++i) {
                const PatternSlot& s = p.slots[i];
                if (s.kind == PatternSlot::Kind::Var)
                    lhs_vars.emplace(s.var, g.species[p.ctor_index].slots[i].sort);
            }
        }
        std::set<std::string> fresh_names;
        for (const FreshVar& f : r.fresh) {
            if (f.name == "age") {
                diag(f.loc, "rule '" + r.name + "': 'age' is reserved and cannot be a fresh variable");
                continue;
            }
            if (lhs_vars.count(f.name))
                diag(f.loc, "rule '" + r.name + "': fresh variable '" + f.name +
                                "' shadows a pattern variable");
            if (!fresh_names.insert(f.name).second)
                diag(f.loc, "rule '" + r.name + "': duplicate fresh variable '" + f.name + "'");
        }

        if (r.kind == RuleKind::Jump) {
            // Propensity: LHS variables and `age` only.
            std::set<std::string> refs;
            collect_var_refs(r.propensity.get(), refs);
            for (const auto& v : refs) {
                if (v == "age") continue;
                if (fresh_names.count(v)) {
                    diag(r.loc, "rule '" + r.name + "': propensity references fresh variable '" +
                                    v + "'");
                } else if (!lhs_vars.count(v)) {
                    diag(r.loc, "rule '" + r.name + "': unbound variable '" + v +
                                    "' in propensity");
                }
            }
            // Distribution parameters: LHS variables and earlier fresh variables.
            std::set<std::string> seen_fresh;
            for (const FreshVar& f : r.fresh) {
                for (const Expr& e : f.dist.params) {
                    std::set<std::string> prefs;
                    collect_var_refs(e.get(), prefs);
                    for (const auto& v : prefs) {
                        if (v == "age") {
                            diag(f.loc, "rule '" + r.name +
                                            "': 'age' may only appear in jump-rule propensities");
                        } else if (!lhs_vars.count(v) && !seen_fresh.count(v)) {
                            diag(f.loc, "rule '" + r.name + "': unbound variable '" + v +
                                            "' in distribution parameters");
                        }
                    }
                }
                seen_fresh.insert(f.name);
            }
            // Templates: LHS variables and fresh variables.
            for (const TermTemplate& t : r.rhs) {
                for (const Expr& e : t.slots) {
                    std::set<std::string> trefs;
                    collect_var_refs(e.get(), trefs);
                    for (const auto& v : trefs) {
                        if (v == "age") {
                            diag(t.loc, "rule '" + r.name +
                                            "': 'age' may only appear in jump-rule propensities");
                        } else if (!lhs_vars.count(v) && !fresh_names.count(v)) {
                            diag(t.loc, "rule '" + r.name + "': unbound fresh variable '" + v +
                                            "' (missing choosing clause?)");
                        }
                    }
                }
            }
        } else {
            // Continuous rules: pure parameter flows, no term rewriting.
            bool mirrors = r.rhs.size() == r.lhs.size();
            if (mirrors) {
                for (std::size_t i = 0; i < r.lhs.size() && mirrors; ++i) {
                    if (r.rhs[i].ctor_index != r.lhs[i].ctor_index ||
                        r.rhs[i].slots.size() != r.lhs[i].slots.size()) {
                        mirrors = false;
                        break;
                    }
                    for (std::size_t j = 0; j < r.lhs[i].slots.size(); ++j) {
                        const PatternSlot& ps = r.lhs[i].slots[j];
                        const ExprNode* e = r.rhs[i].slots[j].get();
                        if (ps.kind == PatternSlot::Kind::Var) {
                            if (!e || e->kind != ExprNode::Kind::VarRef || e->name != ps.var)
                                mirrors = false;
                        } else {
                            bool ok = false;
                            if (e && e->kind == ExprNode::Kind::Literal) {
                                Value lv = e->literal_is_int
                                               ? Value(static_cast<std::int64_t>(e->literal))
                                               : Value(e->literal);
                                ok = lv == ps.literal ||
                                     (lv.as_real() == ps.literal.as_real());
                            } else if (e && e->kind == ExprNode::Kind::ConstRef) {
                                const double* cv = find_const(g.constants, e->name);
                                ok = cv && ps.literal.as_real() == *cv;
                            }
                            if (!ok) mirrors = false;
                        }
                    }
                }
            }
            if (!mirrors)
                diag(r.loc, "rule '" + r.name +
                                "': continuous rule must repeat its left-hand side unchanged");
            std::set<std::string> targets;
            for (const Derivative& d : r.derivatives) {
                auto it = lhs_vars.find(d.target);
                if (it == lhs_vars.end()) {
                    diag(d.loc, "rule '" + r.name + "': derivative target '" + d.target +
                                    "' is not a pattern variable");
                } else if (it->second.kind != SortKind::Real) {
                    diag(d.loc, "rule '" + r.name + "': derivative target '" + d.target +
                                    "' is not bound to a real slot");
                }
                if (!targets.insert(d.target).second)
                    diag(d.loc, "rule '" + r.name + "': duplicate derivative for '" + d.target +
                                    "'");
                std::set<std::string> refs;
                collect_var_refs(d.rhs.get(), refs);
                for (const auto& v : refs) {
                    if (v == "age") {
                        diag(d.loc, "rule '" + r.name +
                                        "': 'age' may only appear in jump-rule propensities");
                    } else if (!lhs_vars.count(v)) {
                        diag(d.loc, "rule '" + r.name + "': unbound variable '" + v +
                                        "' in derivative");
                    }
                }
            }
        }
    }
    return out;
}

Grammar compose(const Grammar& g1, const Grammar& g2) {
    if (g1.dim != g2.dim)
        throw DeclarationConflict("grammars declare different vector dimensions (" +
                                  std::to_string(g1.dim) + " vs " + std::to_string(g2.dim) + ")");
    Grammar out;
    out.name = g1.name;
    out.dim = g1.dim;
    out.species = g1.species;
    out.constants = g1.constants;

    for (const SpeciesDecl& d : g2.species) {
        const SpeciesDecl* prev = out.find_species(d.name);
        if (!prev) {
            out.species.push_back(d);
            continue;
        }
        bool same = prev->slots.size() == d.slots.size();
        for (std::size_t i = 0; same && i < d.slots.size(); ++i) {
            same = prev->slots[i].name == d.slots[i].name &&
                   prev->slots[i].sort == d.slots[i].sort;
        }
        if (!same)
            throw DeclarationConflict("species '" + d.name + "' declared differently");
    }
    for (const auto& [name, value] : g2.constants) {
        const double* prev = find_const(out.constants, name);
        if (!prev) {
            out.constants.emplace_back(name, value);
        } else if (*prev != value) {
            throw DeclarationConflict("constant '" + name + "' declared with different values");
        }
    }

    // Rules: multiset union, merging structurally equal rules.
    out.rules = g1.rules;
    std::set<std::string> names;
    for (const Rule& r : out.rules) names.insert(r.name);
    for (const Rule& r2 : g2.rules) {
        Rule r = r2;
        // Re-resolve constructor indices against the composed species list.
        for (TermPattern& p : r.lhs) p.ctor_index = out.species_index(p.ctor);
        for (TermTemplate& t : r.rhs) t.ctor_index = out.species_index(t.ctor);
        bool merged = false;
        for (Rule& existing : out.rules) {
            if (rules_structurally_equal(existing, r)) {
                existing.multiplicity += r.multiplicity;
                merged = true;
                break;
            }
        }
        if (merged) continue;
        if (names.count(r.name)) {
            int suffix = 2;
            while (names.count(r.name + "_" + std::to_string(suffix))) ++suffix;
            r.name += "_" + std::to_string(suffix);
        }
        names.insert(r.name);
        out.rules.push_back(std::move(r));
    }
    return out;
}

bool grammars_structurally_equal(const Grammar& a, const Grammar& b) {
    if (a.dim != b.dim) return false;
    if (a.species.size() != b.species.size()) return false;
    for (const SpeciesDecl& d : a.species) {
        const SpeciesDecl* o = b.find_species(d.name);
        if (!o || o->slots.size() != d.slots.size()) return false;
        for (std::size_t i = 0; i < d.slots.size(); ++i) {
            if (d.slots[i].name != o->slots[i].name || !(d.slots[i].sort == o->slots[i].sort))
                return false;
        }
    }
    if (a.constants.size() != b.constants.size()) return false;
    for (const auto& [name, value] : a.constants) {
        const double* o = find_const(b.constants, name);
        if (!o || *o != value) return false;
    }
    // Rule multisets: aggregate multiplicities by structural equality.
    auto aggregate = [](const Grammar& g) {
        std::vector<std::pair<Rule, std::int64_t>> groups;
        for (const Rule& r : g.rules) {
            bool found = false;
            for (auto& [rep, mult] : groups) {
                if (rules_structurally_equal(rep, r)) {
                    mult += r.multiplicity;
                    found = true;
                    break;
                }
            }
            if (!found) groups.emplace_back(r, r.multiplicity);
        }
        return groups;
    };
    auto ga = aggregate(a);
    auto gb = aggregate(b);
    if (ga.size() != gb.size()) return false;
    for (const auto& [rep, mult] : ga) {
        bool found = false;
        for (const auto& [rep2, mult2] : gb) {
            if (rules_structurally_equal(rep, rep2)) {
                if (mult != mult2) return false;
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

}  // namespace dgx
