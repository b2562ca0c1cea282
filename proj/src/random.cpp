#include "dgx/random.hpp"

#include <cmath>
#include <vector>

#include "dgx/errors.hpp"

namespace dgx {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

namespace {
std::mt19937_64 make_engine(std::uint64_t seed) {
    // Expand the seed so that nearby seeds give unrelated states.
    std::uint64_t s = seed;
    std::seed_seq seq{splitmix64(s), splitmix64(s), splitmix64(s), splitmix64(s)};
    return std::mt19937_64(seq);
}
}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : eng_(make_engine(seed)) {}

RandomStream RandomStream::for_replica(std::uint64_t root_seed, std::uint64_t replica) {
    std::uint64_t s = root_seed;
    std::uint64_t a = splitmix64(s);
    s = a ^ (replica * 0xD1B54A32D192ED03ULL + 0x9E3779B97F4A7C15ULL);
    return RandomStream(splitmix64(s));
}

double RandomStream::uniform01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double RandomStream::uniform01_halfopen() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
    if (!(lo < hi)) throw InvalidParameter("Uniform requires lo < hi");
    return lo + (hi - lo) * uniform01_halfopen();
}

double RandomStream::exponential(double rate) {
    if (!(rate > 0)) throw InvalidParameter("Exponential requires rate > 0");
    return -std::log(uniform01()) / rate;
}

double RandomStream::normal(double mean, double stddev) {
    if (!(stddev > 0)) throw InvalidParameter("Normal requires stddev > 0");
    if (have_spare_normal_) {
        have_spare_normal_ = false;
        return mean + stddev * spare_normal_;
    }
    // Box-Muller; the second variate is kept for the next call.
    double u1 = uniform01();
    double u2 = uniform01_halfopen();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_normal_ = r * std::sin(theta);
    have_spare_normal_ = true;
    return mean + stddev * r * std::cos(theta);
}

double RandomStream::erlang(std::int64_t shape, double rate) {
    if (shape < 1) throw InvalidParameter("Erlang requires shape >= 1");
    if (!(rate > 0)) throw InvalidParameter("Erlang requires rate > 0");
    double acc = 0.0;
    for (std::int64_t i = 0; i < shape; ++i) acc += -std::log(uniform01());
    return acc / rate;
}

std::int64_t RandomStream::bernoulli(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidParameter("Bernoulli requires 0 <= p <= 1");
    return uniform01() <= p ? 1 : 0;
}

std::int64_t RandomStream::discrete_uniform(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw InvalidParameter("DiscreteUniform requires lo <= hi");
    auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    auto k = static_cast<std::uint64_t>(uniform01_halfopen() * static_cast<double>(span));
    if (k >= span) k = span - 1;
    return lo + static_cast<std::int64_t>(k);
}

std::size_t RandomStream::categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0 || !std::isfinite(w))
            throw InvalidParameter("Categorical requires finite weights >= 0");
        total += w;
    }
    if (!(total > 0)) throw InvalidParameter("Categorical requires positive total weight");
    double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u <= acc && weights[i] > 0) return i;
    }
    // Rounding pushed u past the last positive weight.
    for (std::size_t i = weights.size(); i-- > 0;) {
        if (weights[i] > 0) return i;
    }
    throw InvalidParameter("Categorical requires positive total weight");
}

}  // namespace dgx
