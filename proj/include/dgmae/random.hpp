#pragma once

#include <cmath>
#include <cstdint>

namespace dgmae {

// splitmix64 step; the sole mixing primitive so every stream is portable
// and bit-reproducible across platforms and standard libraries.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Derives an independent substream seed from (seed, a, b). Used for the
// counter-based per-epoch / per-purpose splits of a run seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t a, uint64_t b = 0) {
    uint64_t s = seed;
    uint64_t h = splitmix64(s);
    s = h ^ (a + 0xD1B54A32D192ED03ull);
    h = splitmix64(s);
    s = h ^ (b + 0x8BB84B93962EACC9ull);
    return splitmix64(s);
}

// Small deterministic RNG on top of splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // burn one step so seed 0 does not start at the raw constant
        (void)splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n), n > 0
    int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

    bool bernoulli(double p) { return uniform() < p; }

    // standard normal via Box-Muller (two uniforms per draw, no cached spare)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

private:
    uint64_t state_;
};

} // namespace dgmae
