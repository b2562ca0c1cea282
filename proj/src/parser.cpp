#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "dgx/grammar.hpp"

namespace dgx {

namespace {

struct Token {
    enum class Kind { End, Ident, Number, Punct };
    Kind kind = Kind::End;
    std::string text;
    double num = 0.0;
    bool num_is_int = false;
    SourceLoc loc;
};

const std::set<std::string> kKeywords = {"grammar",  "species", "const",   "dim", "rule",
                                         "with",     "choosing", "solving", "in",  "call"};

class Lexer {
public:
    explicit Lexer(const std::string& src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        for (;;) {
            Token t = next();
            bool end = t.kind == Token::Kind::End;
            out.push_back(std::move(t));
            if (end) break;
        }
        return out;
    }

private:
    const std::string& src_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;

    char peek(std::size_t off = 0) const {
        return pos_ + off < src_.size() ? src_[pos_ + off] : '\0';
    }

    void advance() {
        if (pos_ >= src_.size()) return;
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_space_and_comments() {
        for (;;) {
            while (std::isspace(static_cast<unsigned char>(peek()))) advance();
            if (peek() == '/' && peek(1) == '*') {
                SourceLoc start{line_, col_};
                advance();
                advance();
                while (!(peek() == '*' && peek(1) == '/')) {
                    if (pos_ >= src_.size()) throw SyntaxError(start, "unterminated comment");
                    advance();
                }
                advance();
                advance();
                continue;
            }
            if (peek() == '/' && peek(1) == '/') {
                while (peek() != '\n' && pos_ < src_.size()) advance();
                continue;
            }
            break;
        }
    }

    Token next() {
        skip_space_and_comments();
        Token t;
        t.loc = {line_, col_};
        char c = peek();
        if (c == '\0') {
            t.kind = Token::Kind::End;
            return t;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::string s;
            while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') {
                s += peek();
                advance();
            }
            t.kind = Token::Kind::Ident;
            t.text = std::move(s);
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
            std::string s;
            bool is_int = true;
            while (std::isdigit(static_cast<unsigned char>(peek()))) {
                s += peek();
                advance();
            }
            // A '.' might start a fraction or be the first dot of a range '..'.
            if (peek() == '.' && peek(1) != '.') {
                is_int = false;
                s += peek();
                advance();
                while (std::isdigit(static_cast<unsigned char>(peek()))) {
                    s += peek();
                    advance();
                }
            }
            if (peek() == 'e' || peek() == 'E') {
                is_int = false;
                s += peek();
                advance();
                if (peek() == '+' || peek() == '-') {
                    s += peek();
                    advance();
                }
                if (!std::isdigit(static_cast<unsigned char>(peek())))
                    throw SyntaxError({line_, col_}, "malformed number exponent");
                while (std::isdigit(static_cast<unsigned char>(peek()))) {
                    s += peek();
                    advance();
                }
            }
            double v = 0.0;
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc{}) throw SyntaxError(t.loc, "malformed number '" + s + "'");
            t.kind = Token::Kind::Number;
            t.num = v;
            t.num_is_int = is_int;
            return t;
        }
        static const char* two_char[] = {"->", "<=", ">=", "==", "!=", ".."};
        for (const char* p : two_char) {
            if (c == p[0] && peek(1) == p[1]) {
                advance();
                advance();
                t.kind = Token::Kind::Punct;
                t.text = p;
                return t;
            }
        }
        static const std::string singles = "{}[](),;:~*/+-^<>=.";
        if (singles.find(c) != std::string::npos) {
            advance();
            t.kind = Token::Kind::Punct;
            t.text = std::string(1, c);
            return t;
        }
        throw SyntaxError(t.loc, std::string("unexpected character '") + c + "'");
    }
};

struct BuiltinInfo {
    Builtin fn;
    int arity;
};

const std::map<std::string, BuiltinInfo> kBuiltins = {
    {"exp", {Builtin::Exp, 1}},
    {"log", {Builtin::Log, 1}},
    {"sqrt", {Builtin::Sqrt, 1}},
    {"norm", {Builtin::Norm, 1}},
    {"min", {Builtin::Min, 2}},
    {"max", {Builtin::Max, 2}},
    {"step", {Builtin::Step, 1}},
    {"normal_pdf", {Builtin::NormalPdf, 3}},
    {"erlang_hazard", {Builtin::ErlangHazard, 3}},
    {"incomplete_gamma_upper", {Builtin::IncGammaUpper, 2}},
};

const std::map<std::string, std::pair<DistFamily, int>> kDistFamilies = {
    {"Exponential", {DistFamily::Exponential, 1}},
    {"Erlang", {DistFamily::Erlang, 2}},
    {"Normal", {DistFamily::Normal, 2}},
    {"Bernoulli", {DistFamily::Bernoulli, 1}},
    {"Categorical", {DistFamily::Categorical, -1}},  // >= 1
    {"Uniform", {DistFamily::Uniform, 2}},
    {"DiscreteUniform", {DistFamily::DiscreteUniform, 2}},
};

class Parser {
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Grammar parse() {
        Grammar g;
        expect_keyword("grammar");
        g.name = expect_ident("grammar name");
        expect_punct("{");
        while (!at_punct("}")) {
            const Token& t = cur();
            if (t.kind != Token::Kind::Ident)
                throw SyntaxError(t.loc, "expected a declaration or rule");
            if (t.text == "species") {
                parse_species(g);
            } else if (t.text == "const") {
                parse_const(g);
            } else if (t.text == "dim") {
                parse_dim(g);
            } else if (t.text == "rule") {
                parse_rule(g);
            } else if (t.text == "call") {
                throw SyntaxError(t.loc, "subgrammar calls are not supported");
            } else {
                throw SyntaxError(t.loc, "expected 'species', 'const', 'dim' or 'rule', got '" +
                                             t.text + "'");
            }
        }
        expect_punct("}");
        if (cur().kind != Token::Kind::End)
            throw SyntaxError(cur().loc, "trailing input after grammar block");
        resolve(g);
        return g;
    }

private:
    std::vector<Token> toks_;
    std::size_t idx_ = 0;

    const Token& cur() const { return toks_[idx_]; }
    const Token& peek(std::size_t off = 1) const {
        return toks_[std::min(idx_ + off, toks_.size() - 1)];
    }
    void bump() {
        if (idx_ + 1 < toks_.size()) ++idx_;
    }

    bool at_punct(const char* p) const {
        return cur().kind == Token::Kind::Punct && cur().text == p;
    }
    bool at_ident(const char* s) const {
        return cur().kind == Token::Kind::Ident && cur().text == s;
    }

    void expect_punct(const char* p) {
        if (!at_punct(p))
            throw SyntaxError(cur().loc, std::string("expected '") + p + "'");
        bump();
    }

    void expect_keyword(const char* kw) {
        if (!at_ident(kw)) throw SyntaxError(cur().loc, std::string("expected '") + kw + "'");
        bump();
    }

    std::string expect_ident(const char* what) {
        if (cur().kind != Token::Kind::Ident)
            throw SyntaxError(cur().loc, std::string("expected ") + what);
        if (kKeywords.count(cur().text)) {
            if (cur().text == "call")
                throw SyntaxError(cur().loc, "subgrammar calls are not supported");
            throw SyntaxError(cur().loc, "keyword '" + cur().text + "' cannot be used as " + what);
        }
        std::string s = cur().text;
        bump();
        return s;
    }

    double expect_number(bool* is_int = nullptr) {
        bool neg = false;
        if (at_punct("-")) {
            neg = true;
            bump();
        }
        if (cur().kind != Token::Kind::Number)
            throw SyntaxError(cur().loc, "expected a number");
        double v = cur().num;
        if (is_int) *is_int = cur().num_is_int;
        bump();
        return neg ? -v : v;
    }

    std::int64_t expect_int(const char* what) {
        bool is_int = false;
        SourceLoc loc = cur().loc;
        double v = expect_number(&is_int);
        if (!is_int && v != std::floor(v))
            throw SyntaxError(loc, std::string("expected an integer for ") + what);
        return static_cast<std::int64_t>(v);
    }

    // --- declarations -----------------------------------------------------

    Sort parse_sort() {
        SourceLoc loc = cur().loc;
        std::string s = expect_ident("a sort (int, real or vec)");
        Sort sort;
        if (s == "int") {
            sort.kind = SortKind::Int;
            if (at_punct("(")) {
                bump();
                sort.lo = expect_int("range bound");
                expect_punct("..");
                sort.hi = expect_int("range bound");
                expect_punct(")");
                if (*sort.lo > *sort.hi)
                    throw SortError(loc, "empty int range");
            }
        } else if (s == "real") {
            sort.kind = SortKind::Real;
        } else if (s == "vec") {
            sort.kind = SortKind::Vec;
        } else {
            throw SyntaxError(loc, "unknown sort '" + s + "'");
        }
        return sort;
    }

    void parse_species(Grammar& g) {
        SourceLoc loc = cur().loc;
        bump();  // species
        SpeciesDecl d;
        d.loc = loc;
        d.name = expect_ident("species name");
        expect_punct("[");
        int auto_idx = 0;
        if (!at_punct("]")) {
            for (;;) {
                SlotDecl slot;
                if (cur().kind == Token::Kind::Ident && !kKeywords.count(cur().text) &&
                    peek().kind == Token::Kind::Punct && peek().text == ":") {
                    slot.name = expect_ident("slot name");
                    bump();  // :
                } else {
                    slot.name = "p" + std::to_string(auto_idx);
                }
                slot.sort = parse_sort();
                d.slots.push_back(std::move(slot));
                ++auto_idx;
                if (at_punct(",")) {
                    bump();
                    continue;
                }
                break;
            }
        }
        expect_punct("]");
        expect_punct(";");
        g.species.push_back(std::move(d));
    }

    void parse_const(Grammar& g) {
        bump();  // const
        SourceLoc loc = cur().loc;
        std::string name = expect_ident("constant name");
        expect_punct("=");
        double v = expect_number();
        expect_punct(";");
        if (find_const(g.constants, name))
            throw SortError(loc, "duplicate constant '" + name + "'");
        g.constants.emplace_back(name, v);
    }

    void parse_dim(Grammar& g) {
        SourceLoc loc = cur().loc;
        bump();  // dim
        std::int64_t d = expect_int("dim");
        expect_punct(";");
        if (d < 1 || d > 16) throw SortError(loc, "dim must be between 1 and 16");
        g.dim = static_cast<int>(d);
    }

    // --- rules --------------------------------------------------------------

    void parse_rule(Grammar& g) {
        SourceLoc loc = cur().loc;
        bump();  // rule
        Rule r;
        r.loc = loc;
        r.name = expect_ident("rule name");
        if (at_punct("*")) {
            bump();
            SourceLoc mloc = cur().loc;
            r.multiplicity = expect_int("rule multiplicity");
            if (r.multiplicity < 1) throw SyntaxError(mloc, "multiplicity must be positive");
        }
        expect_punct(":");
        r.lhs = parse_pattern_list();
        expect_punct("->");
        r.rhs = parse_template_list();
        if (at_ident("with")) {
            bump();
            r.kind = RuleKind::Jump;
            r.propensity = parse_expr();
            if (at_ident("choosing")) {
                bump();
                for (;;) {
                    r.fresh.push_back(parse_fresh_binding());
                    if (at_punct(",")) {
                        bump();
                        continue;
                    }
                    break;
                }
            }
        } else if (at_ident("solving")) {
            bump();
            r.kind = RuleKind::Continuous;
            expect_punct("{");
            for (;;) {
                r.derivatives.push_back(parse_derivative());
                if (at_punct(",")) {
                    bump();
                    continue;
                }
                break;
            }
            expect_punct("}");
        } else {
            throw SyntaxError(cur().loc, "expected 'with' or 'solving'");
        }
        expect_punct(";");
        g.rules.push_back(std::move(r));
    }

    std::vector<TermPattern> parse_pattern_list() {
        std::vector<TermPattern> out;
        if (cur().kind == Token::Kind::Number && cur().num == 0.0 && cur().num_is_int) {
            bump();  // '0' = empty side
            return out;
        }
        for (;;) {
            out.push_back(parse_pattern());
            if (at_punct(",")) {
                bump();
                continue;
            }
            break;
        }
        return out;
    }

    TermPattern parse_pattern() {
        TermPattern p;
        p.loc = cur().loc;
        p.ctor = expect_ident("constructor name");
        expect_punct("[");
        if (!at_punct("]")) {
            for (;;) {
                PatternSlot s;
                s.loc = cur().loc;
                if (cur().kind == Token::Kind::Ident) {
                    s.kind = PatternSlot::Kind::Var;
                    s.var = expect_ident("pattern variable");
                } else {
                    bool is_int = false;
                    double v = expect_number(&is_int);
                    s.kind = PatternSlot::Kind::Literal;
                    s.literal = is_int ? Value(static_cast<std::int64_t>(v)) : Value(v);
                }
                p.slots.push_back(std::move(s));
                if (at_punct(",")) {
                    bump();
                    continue;
                }
                break;
            }
        }
        expect_punct("]");
        return p;
    }

    std::vector<TermTemplate> parse_template_list() {
        std::vector<TermTemplate> out;
        if (cur().kind == Token::Kind::Number && cur().num == 0.0 && cur().num_is_int) {
            bump();
            return out;
        }
        for (;;) {
            TermTemplate t;
            t.loc = cur().loc;
            t.ctor = expect_ident("constructor name");
            expect_punct("[");
            if (!at_punct("]")) {
                for (;;) {
                    t.slots.push_back(parse_expr());
                    if (at_punct(",")) {
                        bump();
                        continue;
                    }
                    break;
                }
            }
            expect_punct("]");
            out.push_back(std::move(t));
            if (at_punct(",")) {
                bump();
                continue;
            }
            break;
        }
        return out;
    }

    FreshVar parse_fresh_binding() {
        FreshVar f;
        f.loc = cur().loc;
        f.name = expect_ident("fresh variable name");
        expect_punct("~");
        SourceLoc dloc = cur().loc;
        std::string family = expect_ident("distribution family");
        auto it = kDistFamilies.find(family);
        if (it == kDistFamilies.end())
            throw SyntaxError(dloc, "unknown distribution '" + family + "'");
        f.dist.family = it->second.first;
        f.dist.loc = dloc;
        expect_punct("(");
        if (!at_punct(")")) {
            for (;;) {
                f.dist.params.push_back(parse_expr());
                if (at_punct(",")) {
                    bump();
                    continue;
                }
                break;
            }
        }
        expect_punct(")");
        int want = it->second.second;
        if (want >= 0 && static_cast<int>(f.dist.params.size()) != want)
            throw SyntaxError(dloc, family + " expects " + std::to_string(want) + " parameters");
        if (want < 0 && f.dist.params.empty())
            throw SyntaxError(dloc, family + " expects at least one parameter");
        if (at_punct(":")) {
            bump();
            SourceLoc sloc = cur().loc;
            std::string s = expect_ident("sort annotation");
            if (s == "vec") {
                if (f.dist.family != DistFamily::Normal && f.dist.family != DistFamily::Uniform)
                    throw SyntaxError(sloc, "only Normal and Uniform support ': vec'");
                f.is_vec = true;
            } else if (s != "int" && s != "real") {
                throw SyntaxError(sloc, "unknown sort annotation '" + s + "'");
            }
        }
        return f;
    }

    Derivative parse_derivative() {
        Derivative d;
        d.loc = cur().loc;
        std::string lead = expect_ident("derivative (dX/dt)");
        if (lead.size() < 2 || lead[0] != 'd')
            throw SyntaxError(d.loc, "derivative must be written dX/dt");
        expect_punct("/");
        std::string dt = expect_ident("'dt'");
        if (dt != "dt") throw SyntaxError(d.loc, "derivative must be written dX/dt");
        d.target = lead.substr(1);
        expect_punct("=");
        d.rhs = parse_expr();
        return d;
    }

    // --- expressions --------------------------------------------------------

    Expr parse_expr() { return parse_cmp(); }

    Expr parse_cmp() {
        Expr lhs = parse_additive();
        SourceLoc loc = cur().loc;
        if (at_ident("in")) {
            bump();
            expect_punct("{");
            auto n = std::make_shared<ExprNode>();
            n->kind = ExprNode::Kind::Member;
            n->loc = loc;
            n->args.push_back(lhs.share());
            for (;;) {
                bool is_int = false;
                double v = expect_number(&is_int);
                n->member_set.push_back(v);
                n->member_is_int.push_back(is_int);
                if (at_punct(",")) {
                    bump();
                    continue;
                }
                break;
            }
            expect_punct("}");
            return Expr(std::move(n));
        }
        static const std::pair<const char*, BinOp> cmps[] = {
            {"<=", BinOp::Le}, {">=", BinOp::Ge}, {"==", BinOp::Eq},
            {"!=", BinOp::Ne}, {"<", BinOp::Lt},  {">", BinOp::Gt},
        };
        for (const auto& [p, op] : cmps) {
            if (at_punct(p)) {
                bump();
                Expr rhs = parse_additive();
                return Expr::binary(op, std::move(lhs), std::move(rhs), loc);
            }
        }
        return lhs;
    }

    Expr parse_additive() {
        Expr lhs = parse_term();
        for (;;) {
            SourceLoc loc = cur().loc;
            if (at_punct("+")) {
                bump();
                lhs = Expr::binary(BinOp::Add, std::move(lhs), parse_term(), loc);
            } else if (at_punct("-")) {
                bump();
                lhs = Expr::binary(BinOp::Sub, std::move(lhs), parse_term(), loc);
            } else {
                return lhs;
            }
        }
    }

    Expr parse_term() {
        Expr lhs = parse_unary();
        for (;;) {
            SourceLoc loc = cur().loc;
            if (at_punct("*")) {
                bump();
                lhs = Expr::binary(BinOp::Mul, std::move(lhs), parse_unary(), loc);
            } else if (at_punct("/")) {
                bump();
                lhs = Expr::binary(BinOp::Div, std::move(lhs), parse_unary(), loc);
            } else {
                return lhs;
            }
        }
    }

    Expr parse_unary() {
        if (at_punct("-")) {
            SourceLoc loc = cur().loc;
            bump();
            return Expr::neg(parse_unary(), loc);
        }
        return parse_power();
    }

    Expr parse_power() {
        Expr base = parse_primary();
        if (at_punct("^")) {
            SourceLoc loc = cur().loc;
            bump();
            Expr expo = parse_unary();  // right-associative
            return Expr::binary(BinOp::Pow, std::move(base), std::move(expo), loc);
        }
        return base;
    }

    Expr parse_primary() {
        const Token& t = cur();
        if (t.kind == Token::Kind::Number) {
            Expr e = Expr::literal(t.num, t.num_is_int, t.loc);
            bump();
            return e;
        }
        if (at_punct("(")) {
            bump();
            Expr e = parse_expr();
            expect_punct(")");
            return e;
        }
        if (t.kind == Token::Kind::Ident) {
            if (t.text == "call")
                throw SyntaxError(t.loc, "subgrammar calls are not supported");
            if (peek().kind == Token::Kind::Punct && peek().text == "(") {
                auto it = kBuiltins.find(t.text);
                if (it == kBuiltins.end())
                    throw SyntaxError(t.loc, "unknown function '" + t.text + "'");
                SourceLoc loc = t.loc;
                bump();
                bump();  // '('
                std::vector<Expr> args;
                if (!at_punct(")")) {
                    for (;;) {
                        args.push_back(parse_expr());
                        if (at_punct(",")) {
                            bump();
                            continue;
                        }
                        break;
                    }
                }
                expect_punct(")");
                if (static_cast<int>(args.size()) != it->second.arity)
                    throw SyntaxError(loc, t.text + " expects " +
                                               std::to_string(it->second.arity) + " arguments");
                return Expr::call(it->second.fn, std::move(args), loc);
            }
            std::string name = expect_ident("expression");
            return Expr::var(std::move(name), t.loc);
        }
        throw SyntaxError(t.loc, "expected an expression");
    }

    // --- resolution ---------------------------------------------------------

    static bool references_age(const ExprNode* n) {
        if (!n) return false;
        if (n->kind == ExprNode::Kind::VarRef && n->name == "age") return true;
        for (const auto& a : n->args) {
            if (references_age(a.get())) return true;
        }
        return false;
    }

    Expr resolve_expr(const Expr& e, const Grammar& g) {
        const ExprNode* n = e.get();
        if (!n) return e;
        if (n->kind == ExprNode::Kind::VarRef && find_const(g.constants, n->name)) {
            auto c = std::make_shared<ExprNode>(*n);
            c->kind = ExprNode::Kind::ConstRef;
            return Expr(std::move(c));
        }
        if (n->args.empty()) return e;
        auto c = std::make_shared<ExprNode>(*n);
        for (auto& a : c->args) a = resolve_expr(Expr(a), g).share();
        return Expr(std::move(c));
    }

    void resolve_pattern(TermPattern& p, const Grammar& g,
                         std::map<std::string, std::pair<Sort, SourceLoc>>& var_sorts) {
        int ci = g.species_index(p.ctor);
        if (ci < 0) throw SortError(p.loc, "undeclared constructor '" + p.ctor + "'");
        p.ctor_index = ci;
        const SpeciesDecl& d = g.species[ci];
        if (p.slots.size() != d.slots.size())
            throw SortError(p.loc, p.ctor + " takes " + std::to_string(d.slots.size()) +
                                       " parameters, got " + std::to_string(p.slots.size()));
        for (std::size_t i = 0; i < p.slots.size(); ++i) {
            PatternSlot& s = p.slots[i];
            const Sort& sort = d.slots[i].sort;
            if (s.kind == PatternSlot::Kind::Var) {
                if (const double* cv = find_const(g.constants, s.var)) {
                    // Identifiers naming constants are literal constraints.
                    s.kind = PatternSlot::Kind::Literal;
                    s.const_name = s.var;
                    s.var.clear();
                    s.literal = Value(*cv);
                } else {
                    auto it = var_sorts.find(s.var);
                    if (it != var_sorts.end()) {
                        // Declared int ranges are domain metadata, not part
                        // of the sort; only the kind must agree.
                        if (it->second.first.kind != sort.kind)
                            throw SortError(s.loc, "variable '" + s.var +
                                                       "' bound to slots of different sorts");
                    } else {
                        var_sorts.emplace(s.var, std::make_pair(sort, s.loc));
                    }
                    continue;
                }
            }
            // Literal: convert to the slot's sort.
            if (sort.kind == SortKind::Vec)
                throw SortError(s.loc, "vector slots cannot take literal patterns");
            double raw = s.literal.is_int() ? static_cast<double>(s.literal.as_int())
                                            : s.literal.as_real();
            if (sort.kind == SortKind::Int) {
                if (raw != std::floor(raw))
                    throw SortError(s.loc, "non-integer literal for int slot");
                s.literal = Value(static_cast<std::int64_t>(raw));
            } else {
                s.literal = Value(raw);
            }
        }
    }

    void resolve(Grammar& g) {
        // Species table.
        for (std::size_t i = 0; i < g.species.size(); ++i) {
            for (std::size_t j = 0; j < i; ++j) {
                if (g.species[i].name == g.species[j].name)
                    throw SortError(g.species[i].loc,
                                    "duplicate species '" + g.species[i].name + "'");
            }
            std::set<std::string> names;
            for (const auto& s : g.species[i].slots) {
                if (!names.insert(s.name).second)
                    throw SortError(g.species[i].loc,
                                    "duplicate slot name '" + s.name + "' in species '" +
                                        g.species[i].name + "'");
            }
        }
        std::set<std::string> rule_names;
        for (Rule& r : g.rules) {
            if (!rule_names.insert(r.name).second)
                throw SortError(r.loc, "duplicate rule name '" + r.name + "'");
            std::map<std::string, std::pair<Sort, SourceLoc>> var_sorts;
            for (TermPattern& p : r.lhs) resolve_pattern(p, g, var_sorts);
            for (TermTemplate& t : r.rhs) {
                int ci = g.species_index(t.ctor);
                if (ci < 0) throw SortError(t.loc, "undeclared constructor '" + t.ctor + "'");
                t.ctor_index = ci;
                if (t.slots.size() != g.species[ci].slots.size())
                    throw SortError(t.loc, t.ctor + " takes " +
                                               std::to_string(g.species[ci].slots.size()) +
                                               " parameters, got " +
                                               std::to_string(t.slots.size()));
                for (Expr& e : t.slots) e = resolve_expr(e, g);
            }
            if (r.kind == RuleKind::Jump) {
                r.propensity = resolve_expr(r.propensity, g);
                for (FreshVar& f : r.fresh)
                    for (Expr& e : f.dist.params) e = resolve_expr(e, g);
                r.uses_age = references_age(r.propensity.get());
            } else {
                for (Derivative& d : r.derivatives) d.rhs = resolve_expr(d.rhs, g);
            }
        }
    }
};

}  // namespace

const SpeciesDecl* Grammar::find_species(std::string_view n) const {
    for (const auto& s : species) {
        if (s.name == n) return &s;
    }
    return nullptr;
}

int Grammar::species_index(std::string_view n) const {
    for (std::size_t i = 0; i < species.size(); ++i) {
        if (species[i].name == n) return static_cast<int>(i);
    }
    return -1;
}

bool Grammar::has_continuous_rules() const {
    for (const auto& r : rules) {
        if (r.kind == RuleKind::Continuous) return true;
    }
    return false;
}

Grammar parse_grammar(const std::string& text) {
    Lexer lex(text);
    Parser p(lex.run());
    return p.parse();
}

}  // namespace dgx
