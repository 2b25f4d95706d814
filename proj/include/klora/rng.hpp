#pragma once

#include <cstdint>
#include <random>

namespace klora {

// Deterministic RNG wrapper. Distributions are implemented here rather than
// through std:: distribution objects so that identical seeds give identical
// streams on any standard library.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // uniform in (0, 1)
    double uniform01() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // standard normal via Box-Muller, one cached partner
    double normal();

    // integer in [0, n)
    uint64_t below(uint64_t n) { return eng_() % n; }

private:
    std::mt19937_64 eng_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

// splitmix64 mix of (seed, stream); used to derive independent per-trajectory
// and per-worker seeds from one experiment seed.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

} // namespace klora
