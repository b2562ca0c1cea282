#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dgx/random.hpp"
#include "dgx/store.hpp"

namespace dgx {

struct SimOptions {
    double t_max = 1.0;
    std::uint64_t seed = 0;
    std::int64_t max_events = 1'000'000;
    double ode_rel_tol = 1e-6;
    double ode_abs_tol = 1e-9;
    double event_time_tol = 0.0;  // 0 means 1e-9 * t_max
    std::optional<double> snapshot_dt;

    double effective_event_tol() const {
        return event_time_tol > 0 ? event_time_tol : 1e-9 * t_max;
    }
};

struct EventRec {
    std::optional<double> t;  // absent in discrete-time trajectories
    std::string rule;
    std::vector<Term> consumed;  // with pre-event params
    std::vector<Term> produced;
    std::vector<std::pair<std::string, Value>> draws;
};

struct Snapshot {
    double t;
    std::vector<Term> state;
};

enum class Termination { TMax, Extinction, EventCap };

std::string termination_name(Termination t);

struct Trajectory {
    std::vector<Term> initial;
    std::vector<EventRec> events;
    std::vector<Snapshot> snapshots;
    std::vector<Term> final_state;
    Termination termination = Termination::TMax;
    double t_end = 0.0;
    double final_a_tot = 0.0;
    bool has_times = true;  // false for discrete-time (SPG) runs
};

// Zeno guard: the event budget ran out before t_max. Carries whatever was
// simulated up to the cap.
class EventCapExceeded : public Error {
public:
    EventCapExceeded(const std::string& msg, Trajectory partial_traj)
        : Error(msg), partial(std::move(partial_traj)) {}
    Trajectory partial;
};

// Hybrid continuous-time simulation. Between events the continuous-rule
// contributions are integrated jointly with the cumulative jump hazard; an
// event fires when the hazard crosses an Exp(1) target, with the firing match
// chosen proportionally to its propensity at the localized crossing time.
// Bit-reproducible given (grammar, init, opts, replica).
Trajectory simulate_ct(const Grammar& g, const std::vector<TermInit>& init,
                       const SimOptions& opts, std::uint64_t replica = 0);

// Discrete-time (SPG) semantics: event times are discarded, each step picks a
// match with probability a_i / a_tot. Rejects grammars with solving rules or
// `age` references.
Trajectory simulate_dt(const Grammar& g, const std::vector<TermInit>& init,
                       std::int64_t n_steps, std::uint64_t seed);

// Re-attaches event times to a discrete-time trajectory by drawing each gap
// from Exponential(a_tot of the pre-event state). For age-free SPG grammars
// the result is distributed as simulate_ct.
Trajectory restore_times(const Trajectory& discrete, const Grammar& g, std::uint64_t seed);

// Trajectory log-density: sum_k log a_{r_k}(t_k-) - int_0^t_end a_tot dt,
// re-accumulated by replaying the recorded events and re-integrating the
// continuous motion between them.
double trajectory_loglik(const Grammar& g, const Trajectory& traj, double ode_rel_tol = 1e-6,
                         double ode_abs_tol = 1e-9);

// Runs fn(replica) for replica in [0, replicas), optionally across threads.
// Replicas must not share mutable state; merging by index keeps ensemble
// output independent of scheduling.
void for_each_replica(int replicas, int threads, const std::function<void(int)>& fn);

}  // namespace dgx
