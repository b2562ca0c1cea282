#include <cstdio>
#include <sstream>

#include "dgx/grammar.hpp"

namespace dgx {

namespace {

// Precedence levels for parenthesization; larger binds tighter.
int node_prec(const ExprNode* n) {
    switch (n->kind) {
        case ExprNode::Kind::Binary:
            switch (n->op) {
                case BinOp::Add:
                case BinOp::Sub: return 2;
                case BinOp::Mul:
                case BinOp::Div: return 3;
                case BinOp::Pow: return 5;
                default: return 1;  // comparisons
            }
        case ExprNode::Kind::Member: return 1;
        case ExprNode::Kind::Neg: return 4;
        default: return 6;
    }
}

const char* op_text(BinOp op) {
    switch (op) {
        case BinOp::Add: return " + ";
        case BinOp::Sub: return " - ";
        case BinOp::Mul: return " * ";
        case BinOp::Div: return " / ";
        case BinOp::Pow: return "^";
        case BinOp::Lt: return " < ";
        case BinOp::Le: return " <= ";
        case BinOp::Gt: return " > ";
        case BinOp::Ge: return " >= ";
        case BinOp::Eq: return " == ";
        case BinOp::Ne: return " != ";
    }
    return "?";
}

const char* builtin_name(Builtin fn) {
    switch (fn) {
        case Builtin::Exp: return "exp";
        case Builtin::Log: return "log";
        case Builtin::Sqrt: return "sqrt";
        case Builtin::Norm: return "norm";
        case Builtin::Min: return "min";
        case Builtin::Max: return "max";
        case Builtin::Step: return "step";
        case Builtin::NormalPdf: return "normal_pdf";
        case Builtin::ErlangHazard: return "erlang_hazard";
        case Builtin::IncGammaUpper: return "incomplete_gamma_upper";
    }
    return "?";
}

std::string print_number(double v, bool is_int) {
    if (is_int) return std::to_string(static_cast<std::int64_t>(v));
    return format_real(v);
}

void print_expr(std::ostream& os, const ExprNode* n, int parent_prec) {
    int prec = node_prec(n);
    bool parens = prec < parent_prec;
    if (parens) os << "(";
    switch (n->kind) {
        case ExprNode::Kind::Literal:
            os << print_number(n->literal, n->literal_is_int);
            break;
        case ExprNode::Kind::ConstRef:
        case ExprNode::Kind::VarRef:
            os << n->name;
            break;
        case ExprNode::Kind::Neg:
            os << "-";
            print_expr(os, n->args[0].get(), prec + 1);
            break;
        case ExprNode::Kind::Binary: {
            bool right_assoc = n->op == BinOp::Pow;
            print_expr(os, n->args[0].get(), right_assoc ? prec + 1 : prec);
            os << op_text(n->op);
            print_expr(os, n->args[1].get(), right_assoc ? prec : prec + 1);
            break;
        }
        case ExprNode::Kind::Call: {
            os << builtin_name(n->fn) << "(";
            for (std::size_t i = 0; i < n->args.size(); ++i) {
                if (i) os << ", ";
                print_expr(os, n->args[i].get(), 0);
            }
            os << ")";
            break;
        }
        case ExprNode::Kind::Member: {
            print_expr(os, n->args[0].get(), 2);
            os << " in {";
            for (std::size_t i = 0; i < n->member_set.size(); ++i) {
                if (i) os << ", ";
                os << print_number(n->member_set[i], n->member_is_int[i]);
            }
            os << "}";
            break;
        }
    }
    if (parens) os << ")";
}

void print_expr(std::ostream& os, const Expr& e) {
    if (!e.empty()) print_expr(os, e.get(), 0);
}

void print_sort(std::ostream& os, const Sort& s) {
    switch (s.kind) {
        case SortKind::Int:
            os << "int";
            if (s.has_range()) os << "(" << *s.lo << ".." << *s.hi << ")";
            break;
        case SortKind::Real: os << "real"; break;
        case SortKind::Vec: os << "vec"; break;
    }
}

void print_pattern(std::ostream& os, const TermPattern& p) {
    os << p.ctor << "[";
    for (std::size_t i = 0; i < p.slots.size(); ++i) {
        if (i) os << ", ";
        const PatternSlot& s = p.slots[i];
        if (s.kind == PatternSlot::Kind::Var) {
            os << s.var;
        } else if (!s.const_name.empty()) {
            os << s.const_name;
        } else {
            os << s.literal.to_string();
        }
    }
    os << "]";
}

void print_template(std::ostream& os, const TermTemplate& t) {
    os << t.ctor << "[";
    for (std::size_t i = 0; i < t.slots.size(); ++i) {
        if (i) os << ", ";
        print_expr(os, t.slots[i]);
    }
    os << "]";
}

}  // namespace

std::string pretty_print(const Grammar& g) {
    std::ostringstream os;
    os << "grammar " << g.name << " {\n";
    os << "  dim " << g.dim << ";\n";
    for (const auto& [name, value] : g.constants)
        os << "  const " << name << " = " << format_real(value) << ";\n";
    for (const SpeciesDecl& d : g.species) {
        os << "  species " << d.name << "[";
        for (std::size_t i = 0; i < d.slots.size(); ++i) {
            if (i) os << ", ";
            os << d.slots[i].name << ": ";
            print_sort(os, d.slots[i].sort);
        }
        os << "];\n";
    }
    for (const Rule& r : g.rules) {
        os << "  rule " << r.name;
        if (r.multiplicity != 1) os << " * " << r.multiplicity;
        os << ": ";
        if (r.lhs.empty()) {
            os << "0";
        } else {
            for (std::size_t i = 0; i < r.lhs.size(); ++i) {
                if (i) os << ", ";
                print_pattern(os, r.lhs[i]);
            }
        }
        os << " -> ";
        if (r.rhs.empty() && r.kind == RuleKind::Jump) {
            os << "0";
        } else {
            for (std::size_t i = 0; i < r.rhs.size(); ++i) {
                if (i) os << ", ";
                print_template(os, r.rhs[i]);
            }
        }
        if (r.kind == RuleKind::Jump) {
            os << " with ";
            print_expr(os, r.propensity);
            if (!r.fresh.empty()) {
                os << " choosing ";
                for (std::size_t i = 0; i < r.fresh.size(); ++i) {
                    if (i) os << ", ";
                    const FreshVar& f = r.fresh[i];
                    os << f.name << " ~ " << dist_family_name(f.dist.family) << "(";
                    for (std::size_t j = 0; j < f.dist.params.size(); ++j) {
                        if (j) os << ", ";
                        print_expr(os, f.dist.params[j]);
                    }
                    os << ")";
                    if (f.is_vec) os << ": vec";
                }
            }
        } else {
            os << " solving { ";
            for (std::size_t i = 0; i < r.derivatives.size(); ++i) {
                if (i) os << ", ";
                os << "d" << r.derivatives[i].target << "/dt = ";
                print_expr(os, r.derivatives[i].rhs);
            }
            os << " }";
        }
        os << ";\n";
    }
    os << "}\n";
    return os.str();
}

std::string grammar_hash(const Grammar& g) {
    std::string text = pretty_print(g);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace dgx
