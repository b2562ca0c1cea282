// dgsim: command-line driver for stochastic rewrite-rule (dynamical grammar)
// models. Subcommands: validate, simulate, exact, compare, loglik.
// Exit codes: 0 ok, 1 semantic error, 2 usage or parse error, 3 runtime error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "dgx/engine.hpp"
#include "dgx/exact.hpp"
#include "dgx/grammar.hpp"
#include "dgx/kernels.hpp"
#include "dgx/trajectory_io.hpp"

namespace {

using ojson = nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitSemantic = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

dgx::Grammar load_grammar(const std::string& path) {
    return dgx::parse_grammar(read_file(path));
}

std::vector<dgx::TermInit> load_initial(const std::string& path, const dgx::Grammar& g) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
    return dgx::read_initial_state_json(in, g);
}

dgx::Caps parse_caps(const std::string& text) {
    dgx::Caps caps;
    if (text.empty()) return caps;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) {
            caps.default_cap = std::stoll(item);
        } else {
            caps.per_species.emplace_back(item.substr(0, eq), std::stoll(item.substr(eq + 1)));
        }
    }
    return caps;
}

struct SimulateArgs {
    std::string grammar_path;
    std::string init_path;
    std::string mode = "ct";
    double t_max = 1.0;
    std::int64_t steps = 0;
    std::uint64_t seed = 0;
    int replicas = 1;
    double snapshot_dt = 0.0;
    std::string out_prefix = "trajectory";
    std::string csv_path;
    std::vector<std::string> aggregates;
    std::int64_t max_events = 1000000;
    double ode_rel_tol = 1e-6;
    double ode_abs_tol = 1e-9;
    double event_time_tol = 0.0;
    int threads = 0;
};

int cmd_validate(const std::string& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::ios_base::failure& e) {
        std::cerr << path << ":0:0: " << e.what() << "\n";
        return kExitUsage;
    }
    dgx::Grammar g;
    try {
        g = dgx::parse_grammar(text);
    } catch (const dgx::SyntaxError& e) {
        std::cerr << path << ":" << e.loc.line << ":" << e.loc.col << ": " << e.reason << "\n";
        return kExitUsage;
    } catch (const dgx::SortError& e) {
        std::cerr << path << ":" << e.loc.line << ":" << e.loc.col << ": " << e.reason << "\n";
        return kExitSemantic;
    }
    auto diags = dgx::validate(g);
    if (!diags.empty()) {
        std::cerr << dgx::format_diagnostics(diags, path);
        return kExitSemantic;
    }
    return kExitOk;
}

int cmd_simulate(const SimulateArgs& args) {
    if (args.replicas < 1) {
        std::cerr << "dgsim: replicas must be >= 1\n";
        return kExitUsage;
    }
    if (args.mode == "dt" && args.snapshot_dt > 0) {
        std::cerr << "dgsim: --snapshot-dt is not available in dt mode\n";
        return kExitUsage;
    }
    if (args.mode == "dt" && args.steps < 1) {
        std::cerr << "dgsim: dt mode requires --steps\n";
        return kExitUsage;
    }
    dgx::Grammar g = load_grammar(args.grammar_path);
    auto diags = dgx::validate(g);
    if (!diags.empty()) {
        std::cerr << dgx::format_diagnostics(diags, args.grammar_path);
        return kExitSemantic;
    }
    std::vector<dgx::TermInit> init;
    if (!args.init_path.empty()) init = load_initial(args.init_path, g);
    const std::string hash = dgx::grammar_hash(g);

    dgx::SimOptions opts;
    opts.t_max = args.t_max;
    opts.seed = args.seed;
    opts.max_events = args.max_events;
    opts.ode_rel_tol = args.ode_rel_tol;
    opts.ode_abs_tol = args.ode_abs_tol;
    opts.event_time_tol = args.event_time_tol;
    if (args.snapshot_dt > 0) opts.snapshot_dt = args.snapshot_dt;

    std::vector<dgx::AggregateSpec> aggs;
    for (const auto& a : args.aggregates) aggs.push_back(dgx::parse_aggregate_spec(a));

    auto replica_path = [&](int k) {
        return args.out_prefix + ".r" + std::to_string(k) + ".jsonl";
    };
    auto write_one = [&](int k, const dgx::Trajectory& traj) {
        dgx::TrajectoryMeta meta;
        meta.grammar_hash = hash;
        meta.mode = args.mode;
        meta.seed = args.seed;
        meta.replica = static_cast<std::uint64_t>(k);
        meta.opts = opts;
        std::ofstream out(replica_path(k), std::ios::binary);
        if (!out) throw std::ios_base::failure("cannot write '" + replica_path(k) + "'");
        dgx::write_trajectory_jsonl(out, traj, meta, g);
    };

    std::vector<dgx::Trajectory> results(static_cast<std::size_t>(args.replicas));
    int threads = args.threads > 0
                      ? args.threads
                      : static_cast<int>(std::thread::hardware_concurrency());
    try {
        dgx::for_each_replica(args.replicas, threads, [&](int k) {
            if (args.mode == "ct") {
                results[k] = dgx::simulate_ct(g, init, opts, static_cast<std::uint64_t>(k));
            } else {
                std::uint64_t s = args.seed;
                std::uint64_t rs = dgx::splitmix64(s) ^ static_cast<std::uint64_t>(k);
                results[k] = dgx::simulate_dt(g, init, args.steps, rs);
            }
            write_one(k, results[k]);
        });
    } catch (const dgx::EventCapExceeded& e) {
        // Flush the partial trajectory so the run is inspectable.
        std::cerr << "dgsim: " << e.what() << "\n";
        write_one(0, e.partial);
        return kExitRuntime;
    }

    if (!args.csv_path.empty()) {
        std::ofstream csv(args.csv_path, std::ios::binary);
        if (!csv) throw std::ios_base::failure("cannot write '" + args.csv_path + "'");
        dgx::write_snapshot_csv_header(csv, g, aggs);
        for (int k = 0; k < args.replicas; ++k)
            dgx::append_snapshot_csv(csv, g, k, results[k], aggs);
    }
    return kExitOk;
}

int cmd_exact(const std::string& grammar_path, const std::string& init_path,
              const std::string& caps_text, double t, double tol, const std::string& out_path,
              const std::string& generator_path, const std::string& legend_path,
              double boundary_warn) {
    dgx::Grammar g = load_grammar(grammar_path);
    auto diags = dgx::validate(g);
    if (!diags.empty()) {
        std::cerr << dgx::format_diagnostics(diags, grammar_path);
        return kExitSemantic;
    }
    std::vector<dgx::TermInit> init;
    if (!init_path.empty()) init = load_initial(init_path, g);
    dgx::Caps caps = parse_caps(caps_text);

    dgx::CountSpace space = dgx::enumerate_states(g, init, caps);
    dgx::GeneratorMatrix W = dgx::build_generator(g, space);

    std::vector<double> p0(space.states.size(), 0.0);
    p0[0] = 1.0;  // the seed state is state 0 by construction
    std::vector<double> p = dgx::transient_distribution(W, p0, t, tol);
    double bmass = dgx::boundary_mass(space, p);
    if (bmass > boundary_warn) {
        std::cerr << "dgsim: warning: boundary mass " << dgx::format_real(bmass)
                  << " exceeds " << dgx::format_real(boundary_warn)
                  << "; consider raising --caps\n";
    }

    ojson out;
    out["format"] = "dg-exact";
    out["version"] = 1;
    out["grammar_hash"] = dgx::grammar_hash(g);
    out["grammar_text"] = dgx::pretty_print(g);
    out["t"] = t;
    out["tol"] = tol;
    ojson caps_json;
    caps_json["default"] = caps.default_cap;
    ojson per = ojson::object();
    for (const auto& [name, cap] : caps.per_species) per[name] = cap;
    caps_json["per_species"] = std::move(per);
    out["caps"] = std::move(caps_json);
    out["n_states"] = space.states.size();
    out["boundary_mass"] = bmass;
    out["p"] = p;
    out["legend"] = ojson::parse(dgx::state_legend_json(space));

    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw std::ios_base::failure("cannot write '" + out_path + "'");
    os << out.dump() << "\n";

    if (!generator_path.empty()) {
        std::ofstream gos(generator_path, std::ios::binary);
        if (!gos) throw std::ios_base::failure("cannot write '" + generator_path + "'");
        dgx::write_generator_triplets(gos, W);
    }
    if (!legend_path.empty()) {
        std::ofstream los(legend_path, std::ios::binary);
        if (!los) throw std::ios_base::failure("cannot write '" + legend_path + "'");
        los << dgx::state_legend_json(space) << "\n";
    }
    return kExitOk;
}

int cmd_compare(const std::string& exact_path, const std::vector<std::string>& traj_paths,
                double tol) {
    ojson ex = ojson::parse(read_file(exact_path));
    if (!ex.contains("format") || ex["format"] != "dg-exact") {
        std::cerr << "dgsim: '" << exact_path << "' is not an exact-distribution file\n";
        return kExitSemantic;
    }
    dgx::Grammar g = dgx::parse_grammar(ex["grammar_text"].get<std::string>());
    std::string hash = dgx::grammar_hash(g);
    if (hash != ex["grammar_hash"].get<std::string>()) {
        std::cerr << "dgsim: exact file hash does not match its embedded grammar\n";
        return kExitSemantic;
    }
    double t = ex["t"].get<double>();
    std::vector<double> p = ex["p"].get<std::vector<double>>();

    dgx::Caps caps;
    caps.default_cap = ex["caps"]["default"].get<std::int64_t>();
    for (const auto& [name, cap] : ex["caps"]["per_species"].items())
        caps.per_species.emplace_back(name, cap.get<std::int64_t>());

    // Rebuild the space to map trajectory states to indices; the seed is
    // recovered from the first trajectory's initial state.
    if (traj_paths.empty()) {
        std::cerr << "dgsim: compare needs at least one trajectory\n";
        return kExitUsage;
    }

    std::vector<double> emp(p.size(), 0.0);
    double off_space = 0.0;
    std::size_t total = 0;
    bool space_built = false;
    dgx::CountSpace space;
    for (const std::string& path : traj_paths) {
        std::ifstream in(path);
        if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
        dgx::TrajectoryMeta meta;
        dgx::Trajectory traj = dgx::read_trajectory_jsonl(in, g, &meta);
        if (meta.grammar_hash != hash) {
            std::cerr << "dgsim: trajectory '" << path
                      << "' was produced by a different grammar\n";
            return kExitSemantic;
        }
        if (!space_built) {
            std::vector<dgx::TermInit> seed;
            for (const dgx::Term& term : traj.initial)
                seed.push_back({g.species[term.ctor].name, term.params});
            space = dgx::enumerate_states(g, seed, caps);
            if (space.states.size() != p.size()) {
                std::cerr << "dgsim: state space size mismatch against the exact file\n";
                return kExitSemantic;
            }
            space_built = true;
        }
        if (traj.has_times && traj.t_end + 1e-12 < t) {
            std::cerr << "dgsim: trajectory '" << path << "' ends before t = "
                      << dgx::format_real(t) << "\n";
            return kExitSemantic;
        }
        // State at time t: initial terms plus events with time <= t.
        std::map<dgx::TermId, dgx::Term> live;
        for (const dgx::Term& term : traj.initial) live[term.id] = term;
        for (const dgx::EventRec& ev : traj.events) {
            if (!ev.t || *ev.t > t) continue;
            for (const dgx::Term& c : ev.consumed) live.erase(c.id);
            for (const dgx::Term& c : ev.produced) live[c.id] = c;
        }
        std::vector<dgx::Term> terms;
        for (auto& [id, term] : live) terms.push_back(term);
        int idx = dgx::state_index_of_terms(space, terms);
        if (idx < 0)
            off_space += 1.0;
        else
            emp[idx] += 1.0;
        ++total;
    }
    if (total == 0) {
        std::cerr << "dgsim: no trajectories\n";
        return kExitUsage;
    }
    double inv = 1.0 / static_cast<double>(total);
    dgx::kernels::scale(inv, emp.data(), emp.size());
    off_space *= inv;
    double tv = dgx::kernels::tv_distance(emp.data(), p.data(), p.size()) + 0.5 * off_space;
    std::cout << dgx::format_real(tv) << "\n";
    return tv <= tol ? kExitOk : kExitSemantic;
}

int cmd_loglik(const std::string& grammar_path, const std::string& traj_path) {
    dgx::Grammar g = load_grammar(grammar_path);
    auto diags = dgx::validate(g);
    if (!diags.empty()) {
        std::cerr << dgx::format_diagnostics(diags, grammar_path);
        return kExitSemantic;
    }
    std::ifstream in(traj_path);
    if (!in) throw std::ios_base::failure("cannot open '" + traj_path + "'");
    dgx::TrajectoryMeta meta;
    dgx::Trajectory traj = dgx::read_trajectory_jsonl(in, g, &meta);
    if (meta.grammar_hash != dgx::grammar_hash(g)) {
        std::cerr << "dgsim: trajectory was produced by a different grammar\n";
        return kExitSemantic;
    }
    double ll = dgx::trajectory_loglik(g, traj, meta.opts.ode_rel_tol, meta.opts.ode_abs_tol);
    std::cout << dgx::format_real(ll) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic rewrite-rule model engine"};
    app.require_subcommand(1);

    // validate
    auto* validate = app.add_subcommand("validate", "parse and check a grammar");
    std::string v_grammar;
    validate->add_option("--grammar", v_grammar, "grammar file")->required();

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run trajectories");
    SimulateArgs sim;
    simulate->add_option("--grammar", sim.grammar_path, "grammar file")->required();
    simulate->add_option("--init", sim.init_path, "initial state JSON");
    simulate->add_option("--mode", sim.mode, "ct or dt")->check(CLI::IsMember({"ct", "dt"}));
    simulate->add_option("--tmax", sim.t_max, "time horizon (ct)");
    simulate->add_option("--steps", sim.steps, "number of steps (dt)");
    simulate->add_option("--seed", sim.seed, "root seed");
    simulate->add_option("--replicas", sim.replicas, "number of replicas");
    simulate->add_option("--snapshot-dt", sim.snapshot_dt, "snapshot grid spacing");
    simulate->add_option("--out", sim.out_prefix, "output prefix (one JSONL per replica)");
    simulate->add_option("--csv", sim.csv_path, "wide-format snapshot CSV");
    simulate->add_option("--aggregate", sim.aggregates,
                         "snapshot aggregate, e.g. cell.V:sum (repeatable)");
    simulate->add_option("--max-events", sim.max_events, "event cap per replica");
    simulate->add_option("--ode-rel-tol", sim.ode_rel_tol, "ODE relative tolerance");
    simulate->add_option("--ode-abs-tol", sim.ode_abs_tol, "ODE absolute tolerance");
    simulate->add_option("--event-tol", sim.event_time_tol, "event time localization tolerance");
    simulate->add_option("--threads", sim.threads, "worker threads (default: hardware)");

    // exact
    auto* exact = app.add_subcommand("exact", "transient master-equation distribution");
    std::string e_grammar, e_init, e_caps, e_out = "exact.json", e_gen, e_legend;
    double e_t = 1.0, e_tol = 1e-9, e_warn = 1e-4;
    exact->add_option("--grammar", e_grammar, "grammar file")->required();
    exact->add_option("--init", e_init, "seed state JSON");
    exact->add_option("--caps", e_caps, "count caps: N or A=N,B=M");
    exact->add_option("--t", e_t, "time");
    exact->add_option("--tol", e_tol, "total-variation tolerance");
    exact->add_option("--out", e_out, "output JSON file");
    exact->add_option("--export-generator", e_gen, "sparse triplet export of W");
    exact->add_option("--legend", e_legend, "state legend JSON export");
    exact->add_option("--boundary-warn", e_warn, "warn when boundary mass exceeds this");

    // compare
    auto* compare = app.add_subcommand("compare", "TV distance of trajectories vs exact");
    std::string c_exact;
    std::vector<std::string> c_trajs;
    double c_tol = 0.02;
    compare->add_option("--exact", c_exact, "exact distribution JSON")->required();
    compare->add_option("--traj", c_trajs, "trajectory files")->required()->expected(-1);
    compare->add_option("--tol", c_tol, "pass threshold");

    // loglik
    auto* loglik = app.add_subcommand("loglik", "trajectory log-likelihood");
    std::string l_grammar, l_traj;
    loglik->add_option("--grammar", l_grammar, "grammar file")->required();
    loglik->add_option("--traj", l_traj, "trajectory JSONL file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(v_grammar);
        if (simulate->parsed()) return cmd_simulate(sim);
        if (exact->parsed())
            return cmd_exact(e_grammar, e_init, e_caps, e_t, e_tol, e_out, e_gen, e_legend,
                             e_warn);
        if (compare->parsed()) return cmd_compare(c_exact, c_trajs, c_tol);
        if (loglik->parsed()) return cmd_loglik(l_grammar, l_traj);
    } catch (const dgx::SyntaxError& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitUsage;
    } catch (const dgx::SortError& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitSemantic;
    } catch (const dgx::NotAnSPG& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitSemantic;
    } catch (const dgx::NotCountBased& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitSemantic;
    } catch (const dgx::DeclarationConflict& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitSemantic;
    } catch (const dgx::CapTooLarge& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitSemantic;
    } catch (const dgx::InvalidParameter& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitSemantic;
    } catch (const dgx::Error& e) {
        // Engine/runtime failures: OdeFailure, PropensityError, ReplayMismatch...
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "dgsim: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
