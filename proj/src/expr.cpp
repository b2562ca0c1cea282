#include "dgx/expr.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace dgx {

Expr Expr::literal(double v, bool is_int, SourceLoc loc) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Literal;
    n->literal = v;
    n->literal_is_int = is_int;
    n->loc = loc;
    return Expr(std::move(n));
}

Expr Expr::var(std::string name, SourceLoc loc) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::VarRef;
    n->name = std::move(name);
    n->loc = loc;
    return Expr(std::move(n));
}

Expr Expr::constant(std::string name, SourceLoc loc) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::ConstRef;
    n->name = std::move(name);
    n->loc = loc;
    return Expr(std::move(n));
}

Expr Expr::binary(BinOp op, Expr lhs, Expr rhs, SourceLoc loc) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Binary;
    n->op = op;
    n->args.push_back(lhs.share());
    n->args.push_back(rhs.share());
    n->loc = loc;
    return Expr(std::move(n));
}

Expr Expr::neg(Expr e, SourceLoc loc) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Neg;
    n->args.push_back(e.share());
    n->loc = loc;
    return Expr(std::move(n));
}

Expr Expr::call(Builtin fn, std::vector<Expr> args, SourceLoc loc) {
    auto n = std::make_shared<ExprNode>();
    n->kind = ExprNode::Kind::Call;
    n->fn = fn;
    for (auto& a : args) n->args.push_back(a.share());
    n->loc = loc;
    return Expr(std::move(n));
}

const double* find_const(const ConstTable& consts, std::string_view name) {
    for (const auto& [k, v] : consts) {
        if (k == name) return &v;
    }
    return nullptr;
}

void Env::bind(const std::string& name, Value v) {
    for (auto& [k, val] : vars_) {
        if (k == name) {
            val = std::move(v);
            return;
        }
    }
    vars_.emplace_back(name, std::move(v));
}

const Value* Env::find(std::string_view name) const {
    for (const auto& [k, v] : vars_) {
        if (k == name) return &v;
    }
    return nullptr;
}

namespace {

bool both_int(const Value& a, const Value& b) { return a.is_int() && b.is_int(); }

Value add_values(const Value& a, const Value& b, SourceLoc loc, bool subtract) {
    if (a.is_vec() || b.is_vec()) {
        if (!a.is_vec() || !b.is_vec())
            throw DomainError(loc, "vector and scalar cannot be added");
        const auto& va = a.as_vec();
        const auto& vb = b.as_vec();
        if (va.size() != vb.size()) throw DomainError(loc, "vector dimension mismatch");
        VecD out(va.size());
        for (std::size_t i = 0; i < va.size(); ++i)
            out[i] = subtract ? va[i] - vb[i] : va[i] + vb[i];
        return Value(std::move(out));
    }
    if (both_int(a, b))
        return Value(subtract ? a.as_int() - b.as_int() : a.as_int() + b.as_int());
    return Value(subtract ? a.as_real() - b.as_real() : a.as_real() + b.as_real());
}

Value mul_values(const Value& a, const Value& b, SourceLoc loc) {
    if (a.is_vec() && b.is_vec()) throw DomainError(loc, "vector*vector is not defined");
    if (a.is_vec() || b.is_vec()) {
        const auto& v = a.is_vec() ? a.as_vec() : b.as_vec();
        double s = a.is_vec() ? b.as_real() : a.as_real();
        VecD out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * s;
        return Value(std::move(out));
    }
    if (both_int(a, b)) return Value(a.as_int() * b.as_int());
    return Value(a.as_real() * b.as_real());
}

Value div_values(const Value& a, const Value& b, SourceLoc loc) {
    if (b.is_vec()) throw DomainError(loc, "division by a vector is not defined");
    double d = b.as_real();
    if (d == 0.0) throw DomainError(loc, "division by zero");
    if (a.is_vec()) {
        const auto& v = a.as_vec();
        VecD out(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / d;
        return Value(std::move(out));
    }
    return Value(a.as_real() / d);
}

Value pow_values(const Value& a, const Value& b, SourceLoc loc) {
    if (a.is_vec() || b.is_vec()) throw DomainError(loc, "power of a vector is not defined");
    double base = a.as_real();
    double expo = b.as_real();
    if (base == 0.0 && expo < 0.0) throw DomainError(loc, "zero raised to a negative power");
    if (base < 0.0 && expo != std::floor(expo))
        throw DomainError(loc, "negative base with non-integer exponent");
    double r = std::pow(base, expo);
    if (!std::isfinite(r)) throw DomainError(loc, "power overflow");
    return Value(r);
}

Value compare_values(BinOp op, const Value& a, const Value& b, SourceLoc loc) {
    if (a.is_vec() || b.is_vec()) {
        if (op == BinOp::Eq || op == BinOp::Ne) {
            bool eq = a.is_vec() && b.is_vec() && a.as_vec() == b.as_vec();
            return Value(std::int64_t((op == BinOp::Eq) == eq ? 1 : 0));
        }
        throw DomainError(loc, "ordering comparison on vectors");
    }
    double x = a.as_real();
    double y = b.as_real();
    bool r = false;
    switch (op) {
        case BinOp::Lt: r = x < y; break;
        case BinOp::Le: r = x <= y; break;
        case BinOp::Gt: r = x > y; break;
        case BinOp::Ge: r = x >= y; break;
        case BinOp::Eq: r = x == y; break;
        case BinOp::Ne: r = x != y; break;
        default: break;
    }
    return Value(std::int64_t(r ? 1 : 0));
}

double scalar_arg(const Value& v, SourceLoc loc, const char* what) {
    if (v.is_vec()) throw DomainError(loc, std::string(what) + " expects a scalar");
    return v.as_real();
}

Value eval_call(const ExprNode* n, const std::vector<Value>& args) {
    switch (n->fn) {
        case Builtin::Exp: {
            double r = std::exp(scalar_arg(args[0], n->loc, "exp"));
            if (!std::isfinite(r)) throw DomainError(n->loc, "exp overflow");
            return Value(r);
        }
        case Builtin::Log: {
            double x = scalar_arg(args[0], n->loc, "log");
            if (!(x > 0)) throw DomainError(n->loc, "log of non-positive value");
            return Value(std::log(x));
        }
        case Builtin::Sqrt: {
            double x = scalar_arg(args[0], n->loc, "sqrt");
            if (x < 0) throw DomainError(n->loc, "sqrt of negative value");
            return Value(std::sqrt(x));
        }
        case Builtin::Norm: {
            if (args[0].is_vec()) {
                double acc = 0.0;
                for (double c : args[0].as_vec()) acc += c * c;
                return Value(std::sqrt(acc));
            }
            return Value(std::abs(args[0].as_real()));
        }
        case Builtin::Min:
        case Builtin::Max: {
            bool mn = n->fn == Builtin::Min;
            if (both_int(args[0], args[1])) {
                auto a = args[0].as_int(), b = args[1].as_int();
                return Value(mn ? std::min(a, b) : std::max(a, b));
            }
            double a = scalar_arg(args[0], n->loc, "min/max");
            double b = scalar_arg(args[1], n->loc, "min/max");
            return Value(mn ? std::min(a, b) : std::max(a, b));
        }
        case Builtin::Step: {
            double x = scalar_arg(args[0], n->loc, "step");
            return Value(std::int64_t(x > 0 ? 1 : 0));
        }
        case Builtin::NormalPdf: {
            double sd = scalar_arg(args[2], n->loc, "normal_pdf");
            if (!(sd > 0)) throw DomainError(n->loc, "normal_pdf requires stddev > 0");
            if (args[0].is_vec()) {
                // Isotropic product density with a common scale.
                const auto& x = args[0].as_vec();
                double acc = 1.0;
                for (std::size_t i = 0; i < x.size(); ++i) {
                    double mu = args[1].is_vec() ? args[1].as_vec().at(i)
                                                 : scalar_arg(args[1], n->loc, "normal_pdf");
                    acc *= normal_pdf(x[i], mu, sd);
                }
                return Value(acc);
            }
            double x = args[0].as_real();
            double mu = scalar_arg(args[1], n->loc, "normal_pdf");
            return Value(normal_pdf(x, mu, sd));
        }
        case Builtin::ErlangHazard: {
            double t = scalar_arg(args[0], n->loc, "erlang_hazard");
            double sh = scalar_arg(args[1], n->loc, "erlang_hazard");
            double rate = scalar_arg(args[2], n->loc, "erlang_hazard");
            if (sh != std::floor(sh))
                throw DomainError(n->loc, "erlang_hazard shape must be an integer");
            try {
                return Value(erlang_hazard(t, static_cast<std::int64_t>(sh), rate));
            } catch (const InvalidParameter& e) {
                throw DomainError(n->loc, e.what());
            }
        }
        case Builtin::IncGammaUpper: {
            double a = scalar_arg(args[0], n->loc, "incomplete_gamma_upper");
            double x = scalar_arg(args[1], n->loc, "incomplete_gamma_upper");
            if (!(a > 0) || x < 0)
                throw DomainError(n->loc, "incomplete_gamma_upper requires a > 0, x >= 0");
            return Value(incomplete_gamma_upper(a, x));
        }
    }
    throw DomainError(n->loc, "unknown builtin");
}

Value eval_node(const ExprNode* n, const Env& env) {
    switch (n->kind) {
        case ExprNode::Kind::Literal:
            if (n->literal_is_int) return Value(static_cast<std::int64_t>(n->literal));
            return Value(n->literal);
        case ExprNode::Kind::ConstRef: {
            const ConstTable* ct = env.consts();
            const double* v = ct ? find_const(*ct, n->name) : nullptr;
            if (!v) throw UnboundVariable(n->name);
            return Value(*v);
        }
        case ExprNode::Kind::VarRef: {
            const Value* v = env.find(n->name);
            if (!v) throw UnboundVariable(n->name);
            return *v;
        }
        case ExprNode::Kind::Neg: {
            Value a = eval_node(n->args[0].get(), env);
            if (a.is_vec()) {
                VecD out = a.as_vec();
                for (double& c : out) c = -c;
                return Value(std::move(out));
            }
            if (a.is_int()) return Value(-a.as_int());
            return Value(-a.as_real());
        }
        case ExprNode::Kind::Binary: {
            Value a = eval_node(n->args[0].get(), env);
            Value b = eval_node(n->args[1].get(), env);
            switch (n->op) {
                case BinOp::Add: return add_values(a, b, n->loc, false);
                case BinOp::Sub: return add_values(a, b, n->loc, true);
                case BinOp::Mul: return mul_values(a, b, n->loc);
                case BinOp::Div: return div_values(a, b, n->loc);
                case BinOp::Pow: return pow_values(a, b, n->loc);
                default: return compare_values(n->op, a, b, n->loc);
            }
        }
        case ExprNode::Kind::Call: {
            std::vector<Value> args;
            args.reserve(n->args.size());
            for (const auto& a : n->args) args.push_back(eval_node(a.get(), env));
            return eval_call(n, args);
        }
        case ExprNode::Kind::Member: {
            Value a = eval_node(n->args[0].get(), env);
            double x = scalar_arg(a, n->loc, "in");
            for (double m : n->member_set) {
                if (x == m) return Value(std::int64_t(1));
            }
            return Value(std::int64_t(0));
        }
    }
    throw DomainError(n->loc, "malformed expression node");
}

}  // namespace

Value eval(const Expr& expr, const Env& env) {
    if (expr.empty()) throw DomainError({}, "empty expression");
    return eval_node(expr.get(), env);
}

double erlang_hazard(double t, std::int64_t shape, double rate) {
    if (shape < 1) throw InvalidParameter("erlang_hazard requires shape >= 1");
    if (!(rate > 0)) throw InvalidParameter("erlang_hazard requires rate > 0");
    if (t < 0) throw InvalidParameter("erlang_hazard requires t >= 0");
    if (t == 0.0) return shape == 1 ? rate : 0.0;
    // rate / sum_{j=0}^{n-1} (n-1)!/(n-1-j)! (rate*t)^-j, the exponential and
    // gamma-tail factors cancelled. Monotone in t, tends to rate as t grows.
    double x = rate * t;
    double term = 1.0;
    double sum = 1.0;
    for (std::int64_t j = 1; j < shape; ++j) {
        term *= static_cast<double>(shape - j) / x;
        sum += term;
        if (!std::isfinite(sum)) return 0.0;  // t so small the sum overflows
    }
    return rate / sum;
}

double incomplete_gamma_upper(double a, double x) {
    if (!(a > 0) || x < 0)
        throw InvalidParameter("incomplete_gamma_upper requires a > 0 and x >= 0");
    return boost::math::tgamma(a, x);
}

double normal_pdf(double x, double mean, double stddev) {
    if (!(stddev > 0)) throw InvalidParameter("normal_pdf requires stddev > 0");
    double z = (x - mean) / stddev;
    return std::exp(-0.5 * z * z) / (stddev * std::sqrt(2.0 * M_PI));
}

double hazard_from_density(const std::function<double(double)>& density, double t,
                           double quad_tol) {
    if (t < 0) throw InvalidParameter("hazard_from_density requires t >= 0");
    if (!(quad_tol > 0)) throw InvalidParameter("hazard_from_density requires quad_tol > 0");
    double p = density(t);
    if (p < 0 || !std::isfinite(p))
        throw InvalidParameter("density returned a negative or non-finite value");
    double integral = 0.0;
    if (t > 0) {
        integral = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
            density, 0.0, t, 15, quad_tol);
    }
    double survivor = 1.0 - integral;
    if (survivor < kEpsSurvivor) throw SurvivorUnderflow(survivor);
    return p / survivor;
}

std::string dist_family_name(DistFamily f) {
    switch (f) {
        case DistFamily::Exponential: return "Exponential";
        case DistFamily::Erlang: return "Erlang";
        case DistFamily::Normal: return "Normal";
        case DistFamily::Bernoulli: return "Bernoulli";
        case DistFamily::Categorical: return "Categorical";
        case DistFamily::Uniform: return "Uniform";
        case DistFamily::DiscreteUniform: return "DiscreteUniform";
    }
    return "?";
}

namespace {
double eval_scalar_param(const DistributionSpec& d, std::size_t i, const Env& env) {
    Value v = eval(d.params.at(i), env);
    if (v.is_vec())
        throw InvalidParameter(dist_family_name(d.family) + " parameter must be scalar");
    return v.as_real();
}

std::int64_t eval_int_param(const DistributionSpec& d, std::size_t i, const Env& env) {
    double x = eval_scalar_param(d, i, env);
    if (x != std::floor(x))
        throw InvalidParameter(dist_family_name(d.family) + " parameter must be an integer");
    return static_cast<std::int64_t>(x);
}
}  // namespace

Value sample(const DistributionSpec& dist, const Env& env, RandomStream& rng, int vec_dim) {
    if (vec_dim > 0 && dist.family != DistFamily::Normal && dist.family != DistFamily::Uniform)
        throw InvalidParameter("vector draws are only defined for Normal and Uniform");
    switch (dist.family) {
        case DistFamily::Exponential:
            return Value(rng.exponential(eval_scalar_param(dist, 0, env)));
        case DistFamily::Erlang: {
            std::int64_t n = eval_int_param(dist, 0, env);
            double rate = eval_scalar_param(dist, 1, env);
            return Value(rng.erlang(n, rate));
        }
        case DistFamily::Normal: {
            double mean = eval_scalar_param(dist, 0, env);
            double sd = eval_scalar_param(dist, 1, env);
            if (vec_dim > 0) {
                VecD out(static_cast<std::size_t>(vec_dim));
                for (double& c : out) c = rng.normal(mean, sd);
                return Value(std::move(out));
            }
            return Value(rng.normal(mean, sd));
        }
        case DistFamily::Bernoulli:
            return Value(rng.bernoulli(eval_scalar_param(dist, 0, env)));
        case DistFamily::Categorical: {
            std::vector<double> w(dist.params.size());
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = eval_scalar_param(dist, i, env);
            return Value(static_cast<std::int64_t>(rng.categorical(w)));
        }
        case DistFamily::Uniform: {
            double lo = eval_scalar_param(dist, 0, env);
            double hi = eval_scalar_param(dist, 1, env);
            if (vec_dim > 0) {
                VecD out(static_cast<std::size_t>(vec_dim));
                for (double& c : out) c = rng.uniform(lo, hi);
                return Value(std::move(out));
            }
            return Value(rng.uniform(lo, hi));
        }
        case DistFamily::DiscreteUniform: {
            std::int64_t lo = eval_int_param(dist, 0, env);
            std::int64_t hi = eval_int_param(dist, 1, env);
            return Value(rng.discrete_uniform(lo, hi));
        }
    }
    throw InvalidParameter("unknown distribution family");
}

}  // namespace dgx
