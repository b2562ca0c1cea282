#include "dgx/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>

#include <boost/numeric/odeint.hpp>

namespace dgx {

std::string termination_name(Termination t) {
    switch (t) {
        case Termination::TMax: return "t_max";
        case Termination::Extinction: return "extinction";
        case Termination::EventCap: return "event_cap";
    }
    return "?";
}

namespace {

using State = std::vector<double>;

int rule_index_by_name(const Grammar& g, const std::string& name) {
    for (std::size_t i = 0; i < g.rules.size(); ++i) {
        if (g.rules[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

void require_valid(const Grammar& g) {
    auto ds = validate(g);
    if (!ds.empty())
        throw Error("grammar failed validation: " + ds.front().message);
}

struct SlotKey {
    TermId id;
    std::size_t slot;
    bool operator<(const SlotKey& o) const {
        return id != o.id ? id < o.id : slot < o.slot;
    }
};

// One inter-event segment: the continuous-rule contributions assembled into
// an ODE system over the targeted (term, slot) pairs, plus the jump matches
// whose summed propensity drives the cumulative hazard. Rebuilt after every
// event (the match set changes only then).
class SegmentSystem {
public:
    explicit SegmentSystem(const TermStore& store) : store_(&store), g_(&store.grammar()) {
        for (std::size_t ri = 0; ri < g_->rules.size(); ++ri) {
            const Rule& r = g_->rules[ri];
            if (r.kind == RuleKind::Jump) {
                for (Match& m : store.matches(static_cast<int>(ri))) {
                    jump_.push_back(std::move(m));
                }
                continue;
            }
            for (const Match& m : store.matches(static_cast<int>(ri))) {
                for (const Derivative& d : r.derivatives) {
                    SlotKey key = locate_target(r, m, d.target);
                    auto [it, fresh] = slot_idx_.emplace(key, slots_.size());
                    if (fresh) slots_.push_back(key);
                    cont_.push_back({it->second, &d.rhs, m,
                                     static_cast<double>(r.multiplicity)});
                }
            }
        }
    }

    bool has_jump_matches() const { return !jump_.empty(); }
    bool has_cont_contributions() const { return !cont_.empty(); }
    std::size_t n_slots() const { return slots_.size(); }
    const std::vector<Match>& jump_matches() const { return jump_; }

    State gather() const {
        State y(slots_.size() + 1, 0.0);
        for (std::size_t i = 0; i < slots_.size(); ++i)
            y[i] = store_->term(slots_[i].id).params[slots_[i].slot].as_real();
        return y;  // last entry: cumulative hazard
    }

    void scatter(TermStore& store, const State& y) const {
        for (std::size_t i = 0; i < slots_.size(); ++i)
            store.set_param(slots_[i].id, slots_[i].slot, Value(y[i]));
    }

    void rhs(double t, const State& y, State& dydt) const {
        std::fill(dydt.begin(), dydt.end(), 0.0);
        Env env(&g_->constants);
        for (const auto& c : cont_) {
            env.clear_vars();
            build_env(c.match, &y, env);
            Value v = eval(*c.rhs, env);
            double dv = v.as_real();
            if (!std::isfinite(dv))
                throw OdeFailure("non-finite derivative in rule '" +
                                 g_->rules[c.match.rule_index].name + "'");
            dydt[c.target] += c.mult * dv;
        }
        dydt[slots_.size()] = total_propensity(t, &y, nullptr);
    }

    // Summed propensity over jump matches; optionally also the per-match
    // values in deterministic (rule, binding) order. Pass y to read ODE state
    // from the integrator instead of the store.
    double total_propensity(double t, const State* y, std::vector<double>* per_match) const {
        if (per_match) per_match->assign(jump_.size(), 0.0);
        double a_tot = 0.0;
        Env env(&g_->constants);
        for (std::size_t i = 0; i < jump_.size(); ++i) {
            const Match& m = jump_[i];
            const Rule& r = g_->rules[m.rule_index];
            env.clear_vars();
            build_env(m, y, env);
            if (r.uses_age) env.bind("age", Value(t - m.enabled_at));
            Value v = eval(r.propensity, env);
            double a = v.as_real() * static_cast<double>(r.multiplicity);
            if (!std::isfinite(a) || a < 0)
                throw PropensityError("rule '" + r.name + "' propensity is " +
                                      format_real(a) + " (binding " + binding_str(m) + ")");
            if (per_match) (*per_match)[i] = a;
            a_tot += a;
        }
        return a_tot;
    }

    std::vector<Term> dump_with_overlay(const State& y) const {
        std::vector<Term> out = store_->dump();
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            for (Term& t : out) {
                if (t.id == slots_[i].id) {
                    t.params[slots_[i].slot] = Value(y[i]);
                    break;
                }
            }
        }
        return out;
    }

private:
    const TermStore* store_;
    const Grammar* g_;
    std::vector<SlotKey> slots_;
    std::map<SlotKey, std::size_t> slot_idx_;
    struct ContContribution {
        std::size_t target;
        const Expr* rhs;
        Match match;
        double mult;
    };
    std::vector<ContContribution> cont_;
    std::vector<Match> jump_;

    SlotKey locate_target(const Rule& r, const Match& m, const std::string& var) const {
        for (std::size_t p = 0; p < r.lhs.size(); ++p) {
            const TermPattern& pat = r.lhs[p];
            for (std::size_t i = 0; i < pat.slots.size(); ++i) {
                if (pat.slots[i].kind == PatternSlot::Kind::Var && pat.slots[i].var == var)
                    return SlotKey{m.ids[p], i};
            }
        }
        throw Error("derivative target '" + var + "' not bound in rule '" + r.name + "'");
    }

    void build_env(const Match& m, const State* y, Env& env) const {
        const Rule& r = g_->rules[m.rule_index];
        for (std::size_t p = 0; p < r.lhs.size(); ++p) {
            const Term& t = store_->term(m.ids[p]);
            const TermPattern& pat = r.lhs[p];
            for (std::size_t i = 0; i < pat.slots.size(); ++i) {
                if (pat.slots[i].kind != PatternSlot::Kind::Var) continue;
                if (y) {
                    auto it = slot_idx_.find(SlotKey{t.id, i});
                    if (it != slot_idx_.end()) {
                        env.bind(pat.slots[i].var, Value((*y)[it->second]));
                        continue;
                    }
                }
                env.bind(pat.slots[i].var, t.params[i]);
            }
        }
    }

    std::string binding_str(const Match& m) const {
        std::string s = "[";
        for (std::size_t i = 0; i < m.ids.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(m.ids[i]);
        }
        return s + "]";
    }
};

enum class SegOutcome { ReachedEnd, Crossed };

// Integrates the augmented system from t0 until either the cumulative hazard
// (last state entry) crosses target_h or t reaches t_end. On return y holds
// the state at the stop time. Snapshot grid points passed via next_snap are
// emitted from the dense output as they are crossed.
SegOutcome integrate_segment(SegmentSystem& sys, double t0, double t_end, double target_h,
                             State& y, double& t_out, const SimOptions& opts,
                             double* next_snap,
                             const std::function<void(double, const State&)>& emit) {
    namespace ode = boost::numeric::odeint;
    if (t_end <= t0) {
        t_out = t_end;
        return SegOutcome::ReachedEnd;
    }
    auto sysfn = [&sys](const State& yy, State& dydt, double t) { sys.rhs(t, yy, dydt); };
    auto stepper = ode::make_dense_output(opts.ode_abs_tol, opts.ode_rel_tol,
                                          ode::runge_kutta_dopri5<State>());
    double dt0 = (t_end - t0) / 256.0;
    stepper.initialize(y, t0, dt0);
    const std::size_t li = y.size() - 1;
    const double event_tol = opts.effective_event_tol();
    int tiny_steps = 0;
    State tmp(y.size());

    auto emit_grid_upto = [&](double limit) {
        while (next_snap && *next_snap <= limit) {
            stepper.calc_state(*next_snap, tmp);
            emit(*next_snap, tmp);  // emit advances *next_snap
        }
    };

    for (;;) {
        double t_old = stepper.current_time();
        auto interval = stepper.do_step(sysfn);
        double t_new = interval.second;
        if (t_new - t_old < 1e-14 * std::max(1.0, std::abs(t_new))) {
            if (++tiny_steps > 64)
                throw OdeFailure("step size underflow at t = " + format_real(t_new));
        } else {
            tiny_steps = 0;
        }

        if (stepper.current_state()[li] >= target_h) {
            // Bracketed root localization on the dense output.
            double lo = t_old, hi = t_new;
            while (hi - lo > event_tol) {
                double mid = 0.5 * (lo + hi);
                stepper.calc_state(mid, tmp);
                if (tmp[li] >= target_h)
                    hi = mid;
                else
                    lo = mid;
            }
            emit_grid_upto(hi);
            stepper.calc_state(hi, y);
            t_out = hi;
            return SegOutcome::Crossed;
        }
        if (t_new >= t_end) {
            emit_grid_upto(t_end);
            stepper.calc_state(t_end, y);
            t_out = t_end;
            return SegOutcome::ReachedEnd;
        }
        emit_grid_upto(t_new);
    }
}

class CtRunner {
public:
    CtRunner(const Grammar& g, const std::vector<TermInit>& init, const SimOptions& opts,
             std::uint64_t replica)
        : g_(g), opts_(opts), store_(g), rng_(RandomStream::for_replica(opts.seed, replica)) {
        require_valid(g);
        if (!(opts.t_max > 0)) throw InvalidParameter("t_max must be positive");
        if (opts.max_events < 1) throw InvalidParameter("max_events must be >= 1");
        store_.load(init);
    }

    Trajectory run() {
        traj_.initial = store_.dump();
        traj_.has_times = true;
        if (opts_.snapshot_dt) {
            snap_dt_ = *opts_.snapshot_dt;
            if (!(snap_dt_ > 0)) throw InvalidParameter("snapshot_dt must be positive");
            snapshots_on_ = true;
            emit_plain(0.0);
        }
        const bool grammar_is_markov = !g_.has_continuous_rules() && !g_.uses_age();

        double t = 0.0;
        for (;;) {
            SegmentSystem sys(store_);
            if (!sys.has_jump_matches() && !sys.has_cont_contributions()) {
                // Nothing can ever change again; fast-forward to the horizon.
                flush_grid_plain(opts_.t_max);
                t = opts_.t_max;
                traj_.termination =
                    g_.rules.empty() ? Termination::TMax : Termination::Extinction;
                break;
            }
            double target_h = sys.has_jump_matches()
                                  ? -std::log(rng_.uniform01())
                                  : std::numeric_limits<double>::infinity();
            if (grammar_is_markov) {
                // Constant rates between events: the crossing is exact.
                double a_tot = sys.total_propensity(t, nullptr, nullptr);
                if (a_tot <= 0.0) {
                    flush_grid_plain(opts_.t_max);
                    t = opts_.t_max;
                    traj_.termination = Termination::Extinction;
                    break;
                }
                double t_event = t + target_h / a_tot;
                if (t_event > opts_.t_max) {
                    flush_grid_plain(opts_.t_max);
                    t = opts_.t_max;
                    traj_.termination = Termination::TMax;
                    break;
                }
                flush_grid_plain(t_event);
                fire_event(sys, t_event);
                t = t_event;
                continue;
            }

            State y = sys.gather();
            double t_stop = 0.0;
            auto emit_interp = [&](double tg, const State& yg) {
                traj_.snapshots.push_back({tg, sys.dump_with_overlay(yg)});
                advance_grid();
            };
            SegOutcome oc = integrate_segment(sys, t, opts_.t_max, target_h, y, t_stop, opts_,
                                              snapshots_on_ ? &next_snap_ : nullptr,
                                              emit_interp);
            sys.scatter(store_, y);
            if (oc == SegOutcome::ReachedEnd) {
                t = opts_.t_max;
                traj_.termination = Termination::TMax;
                break;
            }
            fire_event(sys, t_stop);
            t = t_stop;
        }

        finalize(t);
        return std::move(traj_);
    }

private:
    const Grammar& g_;
    SimOptions opts_;
    TermStore store_;
    RandomStream rng_;
    Trajectory traj_;
    bool snapshots_on_ = false;
    double snap_dt_ = 0.0;
    std::int64_t snap_k_ = 0;
    double next_snap_ = 0.0;

    void advance_grid() {
        ++snap_k_;
        next_snap_ = static_cast<double>(snap_k_) * snap_dt_;
    }

    void emit_plain(double tg) {
        traj_.snapshots.push_back({tg, store_.dump()});
        advance_grid();
    }

    void flush_grid_plain(double limit) {
        while (snapshots_on_ && next_snap_ <= limit) emit_plain(next_snap_);
    }

    void fire_event(SegmentSystem& sys, double t_event) {
        store_.set_time(t_event);
        std::vector<double> a;
        double a_tot = sys.total_propensity(t_event, nullptr, &a);
        if (a_tot <= 0.0) return;  // localization landed on a zero-rate point
        if (static_cast<std::int64_t>(traj_.events.size()) >= opts_.max_events) {
            finalize(t_event);
            traj_.termination = Termination::EventCap;
            throw EventCapExceeded("event cap of " + std::to_string(opts_.max_events) +
                                       " exceeded at t = " + format_real(t_event),
                                   std::move(traj_));
        }
        double u = rng_.uniform01() * a_tot;
        std::size_t pick = 0;
        double acc = 0.0;
        bool found = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            acc += a[i];
            if (u <= acc && a[i] > 0) {
                pick = i;
                found = true;
                break;
            }
        }
        if (!found) {
            for (std::size_t i = a.size(); i-- > 0;) {
                if (a[i] > 0) {
                    pick = i;
                    found = true;
                    break;
                }
            }
        }
        if (!found) return;
        const Match& m = sys.jump_matches()[pick];
        const Rule& r = g_.rules[m.rule_index];
        Env env = store_.make_env(m);
        if (r.uses_age) env.bind("age", Value(t_event - m.enabled_at));
        std::vector<std::pair<std::string, Value>> draws;
        for (const FreshVar& f : r.fresh) {
            Value v = sample(f.dist, env, rng_, f.is_vec ? g_.dim : 0);
            env.bind(f.name, v);
            draws.emplace_back(f.name, v);
        }
        RewriteDelta delta = store_.apply_rewrite(m, draws);
        traj_.events.push_back(
            EventRec{t_event, r.name, std::move(delta.removed), std::move(delta.created),
                     std::move(draws)});
    }

    void finalize(double t_end) {
        traj_.final_state = store_.dump();
        traj_.t_end = t_end;
        SegmentSystem sys(store_);
        traj_.final_a_tot = sys.total_propensity(t_end, nullptr, nullptr);
    }
};

}  // namespace

Trajectory simulate_ct(const Grammar& g, const std::vector<TermInit>& init,
                       const SimOptions& opts, std::uint64_t replica) {
    CtRunner runner(g, init, opts, replica);
    return runner.run();
}

Trajectory simulate_dt(const Grammar& g, const std::vector<TermInit>& init,
                       std::int64_t n_steps, std::uint64_t seed) {
    if (g.has_continuous_rules()) throw NotAnSPG("grammar contains solving rules");
    if (g.uses_age()) throw NotAnSPG("grammar references 'age'");
    require_valid(g);
    if (n_steps < 0) throw InvalidParameter("n_steps must be >= 0");

    TermStore store(g);
    store.load(init);
    RandomStream rng(seed);
    Trajectory traj;
    traj.has_times = false;
    traj.initial = store.dump();
    traj.termination = Termination::TMax;
    for (std::int64_t step = 0; step < n_steps; ++step) {
        SegmentSystem sys(store);
        std::vector<double> a;
        double a_tot = sys.total_propensity(0.0, nullptr, &a);
        if (a_tot <= 0.0) {
            traj.termination = Termination::Extinction;
            break;
        }
        double u = rng.uniform01() * a_tot;
        std::size_t pick = 0;
        double acc = 0.0;
        bool found = false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            acc += a[i];
            if (u <= acc && a[i] > 0) {
                pick = i;
                found = true;
                break;
            }
        }
        if (!found) {
            for (std::size_t i = a.size(); i-- > 0;) {
                if (a[i] > 0) {
                    pick = i;
                    break;
                }
            }
        }
        const Match& m = sys.jump_matches()[pick];
        const Rule& r = g.rules[m.rule_index];
        Env env = store.make_env(m);
        std::vector<std::pair<std::string, Value>> draws;
        for (const FreshVar& f : r.fresh) {
            Value v = sample(f.dist, env, rng, f.is_vec ? g.dim : 0);
            env.bind(f.name, v);
            draws.emplace_back(f.name, v);
        }
        RewriteDelta delta = store.apply_rewrite(m, draws);
        traj.events.push_back(EventRec{std::nullopt, r.name, std::move(delta.removed),
                                       std::move(delta.created), std::move(draws)});
    }
    traj.final_state = store.dump();
    traj.t_end = 0.0;
    SegmentSystem sys(store);
    traj.final_a_tot = sys.total_propensity(0.0, nullptr, nullptr);
    return traj;
}

Trajectory restore_times(const Trajectory& discrete, const Grammar& g, std::uint64_t seed) {
    if (discrete.has_times)
        throw ReplayMismatch("trajectory already carries event times");
    require_valid(g);
    if (g.has_continuous_rules() || g.uses_age())
        throw NotAnSPG("time restoration requires an age-free SPG grammar");

    TermStore store(g);
    store.load_terms(discrete.initial);
    RandomStream rng(seed);
    Trajectory out;
    out.has_times = true;
    out.initial = discrete.initial;
    out.termination = discrete.termination;
    double t = 0.0;
    for (const EventRec& ev : discrete.events) {
        SegmentSystem sys(store);
        double a_tot = sys.total_propensity(t, nullptr, nullptr);
        if (!(a_tot > 0.0))
            throw ReplayMismatch("zero total propensity before event '" + ev.rule + "'");
        t += rng.exponential(a_tot);
        int ri = rule_index_by_name(g, ev.rule);
        if (ri < 0) throw ReplayMismatch("unknown rule '" + ev.rule + "'");
        std::vector<TermId> ids;
        for (const Term& c : ev.consumed) ids.push_back(c.id);
        if (!store.find_match(ri, ids))
            throw ReplayMismatch("recorded event for rule '" + ev.rule +
                                 "' does not bind a valid match");
        store.set_time(t);
        store.apply_recorded(ev.consumed, ev.produced);
        EventRec timed = ev;
        timed.t = t;
        out.events.push_back(std::move(timed));
    }
    out.t_end = t;
    out.final_state = store.dump();
    SegmentSystem sys(store);
    out.final_a_tot = sys.total_propensity(t, nullptr, nullptr);
    return out;
}

namespace {

// Advances the store's continuous parameters from t0 to t1 and returns
// int_{t0}^{t1} a_tot dt.
double integrate_propensity(TermStore& store, double t0, double t1, double rel_tol,
                            double abs_tol) {
    if (t1 < t0) throw ReplayMismatch("event times not increasing");
    if (t1 == t0) return 0.0;
    const Grammar& g = store.grammar();
    SegmentSystem sys(store);
    if (!g.has_continuous_rules() && !g.uses_age()) {
        return sys.total_propensity(t0, nullptr, nullptr) * (t1 - t0);
    }
    SimOptions opts;
    opts.t_max = t1;
    opts.ode_rel_tol = rel_tol;
    opts.ode_abs_tol = abs_tol;
    opts.event_time_tol = 1.0;  // no event localization during replay
    State y = sys.gather();
    double t_stop = 0.0;
    integrate_segment(sys, t0, t1, std::numeric_limits<double>::infinity(), y, t_stop, opts,
                      nullptr, [](double, const State&) {});
    sys.scatter(store, y);
    return y.back();
}

}  // namespace

double trajectory_loglik(const Grammar& g, const Trajectory& traj, double ode_rel_tol,
                         double ode_abs_tol) {
    require_valid(g);
    if (!traj.has_times) throw ReplayMismatch("trajectory has no event times");
    TermStore store(g);
    store.load_terms(traj.initial);
    double t = 0.0;
    double ln_sum = 0.0;
    double integral = 0.0;
    for (const EventRec& ev : traj.events) {
        if (!ev.t) throw ReplayMismatch("event without a time stamp");
        double te = *ev.t;
        integral += integrate_propensity(store, t, te, ode_rel_tol, ode_abs_tol);
        store.set_time(te);
        int ri = rule_index_by_name(g, ev.rule);
        if (ri < 0) throw ReplayMismatch("unknown rule '" + ev.rule + "'");
        const Rule& r = g.rules[ri];
        if (r.kind != RuleKind::Jump)
            throw ReplayMismatch("recorded event names non-jump rule '" + ev.rule + "'");
        std::vector<TermId> ids;
        for (const Term& c : ev.consumed) ids.push_back(c.id);
        auto m = store.find_match(ri, ids);
        if (!m)
            throw ReplayMismatch("recorded event for rule '" + ev.rule +
                                 "' does not bind a valid match");
        Env env = store.make_env(*m);
        if (r.uses_age) env.bind("age", Value(te - m->enabled_at));
        double a = eval(r.propensity, env).as_real() * static_cast<double>(r.multiplicity);
        if (!std::isfinite(a) || a <= 0)
            throw PropensityError("rule '" + ev.rule + "' has propensity " + format_real(a) +
                                  " at recorded event time " + format_real(te));
        ln_sum += std::log(a);
        store.apply_recorded(ev.consumed, ev.produced);
        t = te;
    }
    if (traj.t_end < t) throw ReplayMismatch("t_end precedes the last event");
    integral += integrate_propensity(store, t, traj.t_end, ode_rel_tol, ode_abs_tol);
    return ln_sum - integral;
}

void for_each_replica(int replicas, int threads, const std::function<void(int)>& fn) {
    if (replicas <= 0) return;
    threads = std::max(1, std::min(threads, replicas));
    if (threads == 1) {
        for (int k = 0; k < replicas; ++k) fn(k);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            int k = next.fetch_add(1);
            if (k >= replicas) return;
            try {
                fn(k);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dgx
