#include "dgx/trajectory_io.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <json.hpp>

namespace dgx {

namespace {

using ojson = nlohmann::ordered_json;

ojson value_to_json(const Value& v) {
    if (v.is_int()) return v.as_int();
    if (v.is_real()) return v.as_real();
    ojson arr = ojson::array();
    for (double c : v.as_vec()) arr.push_back(c);
    return arr;
}

ojson term_to_json(const Term& t, const Grammar& g) {
    ojson o;
    o["id"] = t.id;
    o["ctor"] = g.species[t.ctor].name;
    ojson params = ojson::array();
    for (const Value& v : t.params) params.push_back(value_to_json(v));
    o["params"] = std::move(params);
    return o;
}

ojson terms_to_json(const std::vector<Term>& ts, const Grammar& g) {
    ojson arr = ojson::array();
    for (const Term& t : ts) arr.push_back(term_to_json(t, g));
    return arr;
}

Value json_to_value(const ojson& j, const Sort& sort, int dim) {
    switch (sort.kind) {
        case SortKind::Int:
            if (!j.is_number_integer())
                throw ReplayMismatch("expected integer parameter in trajectory file");
            return Value(j.get<std::int64_t>());
        case SortKind::Real:
            if (!j.is_number())
                throw ReplayMismatch("expected real parameter in trajectory file");
            return Value(j.get<double>());
        case SortKind::Vec: {
            if (!j.is_array() || static_cast<int>(j.size()) != dim)
                throw ReplayMismatch("expected vec(" + std::to_string(dim) +
                                     ") parameter in trajectory file");
            VecD v;
            for (const auto& c : j) v.push_back(c.get<double>());
            return Value(std::move(v));
        }
    }
    throw ReplayMismatch("unknown sort");
}

Term json_to_term(const ojson& j, const Grammar& g) {
    Term t;
    t.id = j.at("id").get<TermId>();
    std::string ctor = j.at("ctor").get<std::string>();
    int ci = g.species_index(ctor);
    if (ci < 0) throw ReplayMismatch("trajectory references unknown constructor '" + ctor + "'");
    t.ctor = ci;
    const auto& params = j.at("params");
    const SpeciesDecl& d = g.species[ci];
    if (params.size() != d.slots.size())
        throw ReplayMismatch("trajectory term arity mismatch for '" + ctor + "'");
    for (std::size_t i = 0; i < d.slots.size(); ++i)
        t.params.push_back(json_to_value(params[i], d.slots[i].sort, g.dim));
    return t;
}

std::vector<Term> json_to_terms(const ojson& j, const Grammar& g) {
    std::vector<Term> out;
    for (const auto& e : j) out.push_back(json_to_term(e, g));
    return out;
}

}  // namespace

void write_trajectory_jsonl(std::ostream& os, const Trajectory& traj,
                            const TrajectoryMeta& meta, const Grammar& g) {
    ojson header;
    header["format"] = "dg-trajectory";
    header["version"] = 1;
    header["grammar_hash"] = meta.grammar_hash;
    header["mode"] = meta.mode;
    header["seed"] = meta.seed;
    header["replica"] = meta.replica;
    ojson opts;
    opts["t_max"] = meta.opts.t_max;
    opts["max_events"] = meta.opts.max_events;
    opts["ode_rel_tol"] = meta.opts.ode_rel_tol;
    opts["ode_abs_tol"] = meta.opts.ode_abs_tol;
    opts["event_time_tol"] = meta.opts.effective_event_tol();
    if (meta.opts.snapshot_dt)
        opts["snapshot_dt"] = *meta.opts.snapshot_dt;
    else
        opts["snapshot_dt"] = nullptr;
    header["opts"] = std::move(opts);
    header["initial"] = terms_to_json(traj.initial, g);
    os << header.dump() << "\n";

    // Events and snapshots in time order; a snapshot at an event time holds
    // the pre-event state and is written first.
    std::size_t ei = 0, si = 0;
    auto write_event = [&](const EventRec& ev) {
        ojson o;
        if (ev.t)
            o["t"] = *ev.t;
        else
            o["t"] = nullptr;
        o["rule"] = ev.rule;
        o["consumed"] = terms_to_json(ev.consumed, g);
        o["produced"] = terms_to_json(ev.produced, g);
        ojson draws = ojson::object();
        for (const auto& [name, v] : ev.draws) draws[name] = value_to_json(v);
        o["draws"] = std::move(draws);
        os << o.dump() << "\n";
    };
    auto write_snapshot = [&](const Snapshot& s) {
        ojson o;
        o["t"] = s.t;
        o["state"] = terms_to_json(s.state, g);
        os << o.dump() << "\n";
    };
    while (ei < traj.events.size() || si < traj.snapshots.size()) {
        bool take_snapshot;
        if (si >= traj.snapshots.size()) {
            take_snapshot = false;
        } else if (ei >= traj.events.size()) {
            take_snapshot = true;
        } else {
            double et = traj.events[ei].t.value_or(0.0);
            take_snapshot = traj.snapshots[si].t <= et;
        }
        if (take_snapshot)
            write_snapshot(traj.snapshots[si++]);
        else
            write_event(traj.events[ei++]);
    }

    ojson footer;
    footer["termination"] = termination_name(traj.termination);
    footer["final_a_tot"] = traj.final_a_tot;
    footer["n_events"] = traj.events.size();
    if (traj.has_times)
        footer["t_end"] = traj.t_end;
    else
        footer["t_end"] = nullptr;
    footer["final"] = terms_to_json(traj.final_state, g);
    os << footer.dump() << "\n";
}

Trajectory read_trajectory_jsonl(std::istream& is, const Grammar& g,
                                 TrajectoryMeta* meta_out) {
    Trajectory traj;
    std::string line;
    bool have_header = false, have_footer = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ojson j = ojson::parse(line);
        if (!have_header) {
            if (!j.contains("format") || j["format"] != "dg-trajectory")
                throw ReplayMismatch("not a trajectory file (missing header)");
            if (meta_out) {
                meta_out->grammar_hash = j.value("grammar_hash", std::string());
                meta_out->mode = j.value("mode", std::string("ct"));
                meta_out->seed = j.value("seed", std::uint64_t{0});
                meta_out->replica = j.value("replica", std::uint64_t{0});
                const auto& opts = j.at("opts");
                meta_out->opts.t_max = opts.value("t_max", 0.0);
                meta_out->opts.max_events = opts.value("max_events", std::int64_t{1000000});
                meta_out->opts.ode_rel_tol = opts.value("ode_rel_tol", 1e-6);
                meta_out->opts.ode_abs_tol = opts.value("ode_abs_tol", 1e-9);
                if (opts.contains("snapshot_dt") && !opts["snapshot_dt"].is_null())
                    meta_out->opts.snapshot_dt = opts["snapshot_dt"].get<double>();
            }
            traj.has_times = j.value("mode", std::string("ct")) != "dt";
            traj.initial = json_to_terms(j.at("initial"), g);
            have_header = true;
            continue;
        }
        if (j.contains("termination")) {
            std::string term = j["termination"].get<std::string>();
            if (term == "t_max")
                traj.termination = Termination::TMax;
            else if (term == "extinction")
                traj.termination = Termination::Extinction;
            else if (term == "event_cap")
                traj.termination = Termination::EventCap;
            else
                throw ReplayMismatch("unknown termination '" + term + "'");
            traj.final_a_tot = j.value("final_a_tot", 0.0);
            if (j.contains("t_end") && !j["t_end"].is_null()) traj.t_end = j["t_end"].get<double>();
            if (j.contains("final")) traj.final_state = json_to_terms(j["final"], g);
            have_footer = true;
            continue;
        }
        if (j.contains("state")) {
            Snapshot s;
            s.t = j.at("t").get<double>();
            s.state = json_to_terms(j.at("state"), g);
            traj.snapshots.push_back(std::move(s));
            continue;
        }
        if (j.contains("rule")) {
            EventRec ev;
            if (!j.at("t").is_null()) ev.t = j.at("t").get<double>();
            ev.rule = j.at("rule").get<std::string>();
            ev.consumed = json_to_terms(j.at("consumed"), g);
            ev.produced = json_to_terms(j.at("produced"), g);
            for (const auto& [key, dv] : j.at("draws").items()) {
                Value v;
                if (dv.is_number_integer()) {
                    v = Value(dv.get<std::int64_t>());
                } else if (dv.is_number()) {
                    v = Value(dv.get<double>());
                } else if (dv.is_array()) {
                    VecD vec;
                    for (const auto& c : dv) vec.push_back(c.get<double>());
                    v = Value(std::move(vec));
                } else {
                    throw ReplayMismatch("malformed draw value for '" + key + "'");
                }
                ev.draws.emplace_back(key, std::move(v));
            }
            traj.events.push_back(std::move(ev));
            continue;
        }
        throw ReplayMismatch("unrecognized trajectory record");
    }
    if (!have_header) throw ReplayMismatch("empty trajectory file");
    if (!have_footer) throw ReplayMismatch("trajectory file has no footer record");
    return traj;
}

std::vector<TermInit> read_initial_state_json(std::istream& is, const Grammar& g) {
    ojson j = ojson::parse(is);
    if (!j.is_array()) throw InvalidParameter("initial state must be a JSON array");
    std::vector<TermInit> out;
    for (const auto& e : j) {
        TermInit t;
        t.ctor = e.at("ctor").get<std::string>();
        int ci = g.species_index(t.ctor);
        if (ci < 0)
            throw SortError({}, "initial state uses undeclared constructor '" + t.ctor + "'");
        const SpeciesDecl& d = g.species[ci];
        const auto& params = e.at("params");
        if (params.size() != d.slots.size())
            throw SortError({}, "initial state term '" + t.ctor + "' has wrong arity");
        for (std::size_t i = 0; i < d.slots.size(); ++i)
            t.params.push_back(json_to_value(params[i], d.slots[i].sort, g.dim));
        std::int64_t count = e.value("count", std::int64_t{1});
        if (count < 0) throw InvalidParameter("negative count in initial state");
        for (std::int64_t k = 0; k < count; ++k) out.push_back(t);
    }
    return out;
}

AggregateSpec parse_aggregate_spec(const std::string& text) {
    AggregateSpec spec;
    auto dot = text.find('.');
    auto colon = text.find(':');
    if (dot == std::string::npos || colon == std::string::npos || colon < dot)
        throw InvalidParameter("aggregate spec must look like species.slot:sum");
    spec.species = text.substr(0, dot);
    spec.slot = text.substr(dot + 1, colon - dot - 1);
    std::string kind = text.substr(colon + 1);
    if (kind == "sum")
        spec.kind = AggregateSpec::Kind::Sum;
    else if (kind == "mean")
        spec.kind = AggregateSpec::Kind::Mean;
    else
        throw InvalidParameter("aggregate kind must be 'sum' or 'mean'");
    return spec;
}

namespace {
std::string agg_column(const AggregateSpec& a) {
    return (a.kind == AggregateSpec::Kind::Sum ? "sum_" : "mean_") + a.species + "_" + a.slot;
}
}  // namespace

void write_snapshot_csv_header(std::ostream& os, const Grammar& g,
                               const std::vector<AggregateSpec>& aggs) {
    os << "replica,time";
    for (const SpeciesDecl& d : g.species) os << ",n_" << d.name;
    for (const AggregateSpec& a : aggs) os << "," << agg_column(a);
    os << "\n";
}

void append_snapshot_csv(std::ostream& os, const Grammar& g, int replica,
                         const Trajectory& traj, const std::vector<AggregateSpec>& aggs) {
    struct AggCol {
        int ctor;
        std::size_t slot;
        AggregateSpec::Kind kind;
    };
    std::vector<AggCol> cols;
    for (const AggregateSpec& a : aggs) {
        int ci = g.species_index(a.species);
        if (ci < 0) throw InvalidParameter("unknown species '" + a.species + "' in aggregate");
        const SpeciesDecl& d = g.species[ci];
        std::size_t slot = d.slots.size();
        for (std::size_t i = 0; i < d.slots.size(); ++i) {
            if (d.slots[i].name == a.slot) slot = i;
        }
        if (slot == d.slots.size())
            throw InvalidParameter("unknown slot '" + a.slot + "' in aggregate");
        if (d.slots[slot].sort.kind == SortKind::Vec)
            throw InvalidParameter("aggregates are not defined for vec slots");
        cols.push_back({ci, slot, a.kind});
    }
    for (const Snapshot& s : traj.snapshots) {
        os << replica << "," << format_real(s.t);
        for (std::size_t ci = 0; ci < g.species.size(); ++ci) {
            std::size_t count = 0;
            for (const Term& t : s.state) {
                if (t.ctor == static_cast<int>(ci)) ++count;
            }
            os << "," << count;
        }
        for (const AggCol& c : cols) {
            double acc = 0.0;
            std::size_t count = 0;
            for (const Term& t : s.state) {
                if (t.ctor != c.ctor) continue;
                acc += t.params[c.slot].as_real();
                ++count;
            }
            if (c.kind == AggregateSpec::Kind::Mean && count > 0)
                acc /= static_cast<double>(count);
            os << "," << format_real(acc);
        }
        os << "\n";
    }
}

}  // namespace dgx
