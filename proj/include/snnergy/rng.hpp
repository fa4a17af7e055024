#pragma once

#include <cmath>
#include <cstdint>

namespace snnergy {

// Deterministic PRNG used for weight init and data generation. Distributions
// are implemented by hand so generated bytes do not depend on the standard
// library's unspecified distribution algorithms.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Stable stream derivation: same (seed, stream ids) -> same generator,
// independent of generation order elsewhere.
inline uint64_t derive_seed(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = seed;
    uint64_t x = splitmix64(s);
    s ^= a * 0x9e3779b97f4a7c15ull;
    x ^= splitmix64(s);
    s ^= b + 0xd1b54a32d192ed03ull;
    x ^= splitmix64(s);
    s ^= c + 0x8cb92ba72f3d8dd7ull;
    x ^= splitmix64(s);
    return x;
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // warm up so nearby seeds decorrelate
        splitmix64(state_);
        splitmix64(state_);
    }

    uint64_t next_u64() { return splitmix64(state_); }

    uint32_t next_u32() { return static_cast<uint32_t>(next_u64() >> 32); }

    // uniform in [0, 1)
    float uniform() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // index in [0, n)
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // Box-Muller; one value per call, cached pair.
    float normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        float u1 = uniform();
        float u2 = uniform();
        if (u1 < 1e-12f) u1 = 1e-12f;
        float r = std::sqrt(-2.0f * std::log(u1));
        float a = 6.28318530717958647692f * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    float normal(float mean, float sigma) { return mean + sigma * normal(); }

private:
    uint64_t state_;
    bool have_spare_ = false;
    float spare_ = 0.0f;
};

}  // namespace snnergy
