#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dgx/engine.hpp"

namespace dgx {

// Header metadata stamped into every trajectory file. The grammar hash lets
// downstream commands refuse artifacts produced from a different model.
struct TrajectoryMeta {
    std::string grammar_hash;
    std::string mode;  // "ct" or "dt"
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    SimOptions opts;
};

// JSON Lines: one header record, event and snapshot records in time order,
// one footer record. Field order is fixed for diffability.
void write_trajectory_jsonl(std::ostream& os, const Trajectory& traj,
                            const TrajectoryMeta& meta, const Grammar& g);

Trajectory read_trajectory_jsonl(std::istream& is, const Grammar& g, TrajectoryMeta* meta_out);

// Wide-format snapshot observables: per-constructor counts plus requested
// parameter aggregates.
struct AggregateSpec {
    std::string species;
    std::string slot;
    enum class Kind { Sum, Mean } kind = Kind::Sum;
};

AggregateSpec parse_aggregate_spec(const std::string& text);  // "cell.V:sum"

// Initial-state file: a JSON array of {"ctor": name, "params": [...]} records
// with an optional "count" for repeated terms.
std::vector<TermInit> read_initial_state_json(std::istream& is, const Grammar& g);

void write_snapshot_csv_header(std::ostream& os, const Grammar& g,
                               const std::vector<AggregateSpec>& aggs);
void append_snapshot_csv(std::ostream& os, const Grammar& g, int replica,
                         const Trajectory& traj, const std::vector<AggregateSpec>& aggs);

}  // namespace dgx
