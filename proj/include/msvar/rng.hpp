#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace msvar {

inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seeded generator with hand-rolled transforms. The mt19937_64 engine is
// fully specified by the standard and the transforms below avoid the
// implementation-defined std::*_distribution, so streams are reproducible
// across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // [0, n)
    int64_t randint(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

    // Stateless stream derivation, so per-sample / per-step generators do not
    // depend on the order in which other streams were consumed.
    static Rng derive(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
        uint64_t s = seed;
        uint64_t h = splitmix64(s);
        s ^= a * 0xff51afd7ed558ccdULL;
        h ^= splitmix64(s);
        s ^= b * 0xc4ceb9fe1a85ec53ULL;
        h ^= splitmix64(s);
        s ^= c * 0x9e3779b97f4a7c15ULL;
        h ^= splitmix64(s);
        return Rng(h);
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace msvar
