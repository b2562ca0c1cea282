#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dgx/errors.hpp"
#include "dgx/random.hpp"
#include "dgx/value.hpp"

namespace dgx {

enum class BinOp { Add, Sub, Mul, Div, Pow, Lt, Le, Gt, Ge, Eq, Ne };
enum class Builtin {
    Exp,
    Log,
    Sqrt,
    Norm,
    Min,
    Max,
    Step,
    NormalPdf,
    ErlangHazard,
    IncGammaUpper,
};

struct ExprNode;
using ExprPtr = std::shared_ptr<const ExprNode>;

// Immutable expression tree. Shared freely across rules and matches.
struct ExprNode {
    enum class Kind { Literal, ConstRef, VarRef, Neg, Binary, Call, Member };

    Kind kind = Kind::Literal;
    SourceLoc loc;

    double literal = 0.0;
    bool literal_is_int = false;     // written without '.' or exponent
    std::string name;                // ConstRef / VarRef
    BinOp op = BinOp::Add;           // Binary
    Builtin fn = Builtin::Exp;       // Call
    std::vector<ExprPtr> args;       // children
    std::vector<double> member_set;  // Member: `x in {a, b, ...}`
    std::vector<bool> member_is_int;
};

class Expr {
public:
    Expr() = default;
    explicit Expr(ExprPtr root) : root_(std::move(root)) {}

    const ExprNode* get() const { return root_.get(); }
    ExprPtr share() const { return root_; }
    bool empty() const { return root_ == nullptr; }

    static Expr literal(double v, bool is_int = false, SourceLoc loc = {});
    static Expr var(std::string name, SourceLoc loc = {});
    static Expr constant(std::string name, SourceLoc loc = {});
    static Expr binary(BinOp op, Expr lhs, Expr rhs, SourceLoc loc = {});
    static Expr neg(Expr e, SourceLoc loc = {});
    static Expr call(Builtin fn, std::vector<Expr> args, SourceLoc loc = {});

private:
    ExprPtr root_;
};

// Named constants of a grammar, in declaration order.
using ConstTable = std::vector<std::pair<std::string, double>>;

const double* find_const(const ConstTable& consts, std::string_view name);

// Variable bindings for one evaluation. Small and rebuilt per match, so a
// flat vector with linear lookup beats a map here.
class Env {
public:
    Env() = default;
    explicit Env(const ConstTable* consts) : consts_(consts) {}

    void bind(const std::string& name, Value v);
    const Value* find(std::string_view name) const;
    const ConstTable* consts() const { return consts_; }
    void set_consts(const ConstTable* consts) { consts_ = consts; }
    void clear_vars() { vars_.clear(); }
    const std::vector<std::pair<std::string, Value>>& vars() const { return vars_; }

private:
    std::vector<std::pair<std::string, Value>> vars_;
    const ConstTable* consts_ = nullptr;
};

// Evaluates an expression. Total on its domain: out-of-domain input throws
// DomainError, unbound names throw UnboundVariable. Pure: identical
// (expr, env) pairs yield bit-identical values.
Value eval(const Expr& expr, const Env& env);

// Hazard of the Erlang(shape, rate) waiting-time density at age t, via the
// closed form lambda^n t^(n-1) e^(-lambda t) / Gamma(n, lambda t). The
// exponential factors cancel against the upper incomplete gamma, which keeps
// the ratio finite for arbitrarily large t; the value at t = 0 is the limit
// (rate for shape 1, zero otherwise).
double erlang_hazard(double t, std::int64_t shape, double rate);

// Upper (non-normalized) incomplete gamma Gamma(a, x).
double incomplete_gamma_upper(double a, double x);

double normal_pdf(double x, double mean, double stddev);

inline constexpr double kEpsSurvivor = 1e-12;

// Converts a waiting-time density to the equivalent time-varying hazard
// P(t) / (1 - int_0^t P). The survivor integral uses adaptive Gauss-Kronrod
// quadrature to quad_tol. Throws SurvivorUnderflow once the survivor
// probability drops below kEpsSurvivor.
double hazard_from_density(const std::function<double(double)>& density, double t,
                           double quad_tol = 1e-9);

enum class DistFamily {
    Exponential,
    Erlang,
    Normal,
    Bernoulli,
    Categorical,
    Uniform,
    DiscreteUniform,
};

std::string dist_family_name(DistFamily f);

// A distribution whose parameters are expressions evaluated at sampling time.
struct DistributionSpec {
    DistFamily family = DistFamily::Exponential;
    std::vector<Expr> params;  // Categorical: one weight per outcome
    SourceLoc loc;
};

// Draws one value. `vec_dim > 0` requests a vector draw of that dimension
// (component-wise, Normal and Uniform families only).
Value sample(const DistributionSpec& dist, const Env& env, RandomStream& rng, int vec_dim = 0);

}  // namespace dgx
