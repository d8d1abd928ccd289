#pragma once

#include <cstdint>

namespace dbgi {

// splitmix64-based generator. Portable and byte-reproducible across platforms,
// so every derived stream depends only on the root seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Independent stream for (seed, index) pairs; parallel and serial
    // consumers of per-sample streams agree by construction.
    static Rng derive(std::uint64_t seed, std::uint64_t index);

    std::uint64_t next_u64();
    std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }
    std::uint64_t below(std::uint64_t bound);  // uniform in [0, bound)
    double uniform();                          // [0, 1)
    double uniform(double lo, double hi);
    double normal();                           // standard normal, Box-Muller
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dbgi
