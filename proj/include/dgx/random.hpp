#pragma once

#include <cstdint>
#include <random>

namespace dgx {

// Deterministic random stream. Wraps std::mt19937_64 (whose output sequence
// is fixed by the standard) and implements all variate transforms in-house so
// that a given seed produces the same draws on every platform. Replica
// streams are derived from one root seed by a splitmix64 counter scheme, so
// ensemble results do not depend on execution order.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed);

    static RandomStream for_replica(std::uint64_t root_seed, std::uint64_t replica);

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on (0, 1]; never returns 0, so -log(u) is finite.
    double uniform01();
    // Uniform on [0, 1).
    double uniform01_halfopen();

    double uniform(double lo, double hi);
    double exponential(double rate);
    double normal(double mean, double stddev);
    double erlang(std::int64_t shape, double rate);
    std::int64_t bernoulli(double p);
    std::int64_t discrete_uniform(std::int64_t lo, std::int64_t hi);
    // Index into the weight vector, proportional to weights.
    std::size_t categorical(const std::vector<double>& weights);

private:
    std::mt19937_64 eng_;
    bool have_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

// splitmix64 mixing step; used for seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace dgx
