#pragma once

#include <cmath>
#include <cstdint>

namespace uat::rng {

// splitmix64 finalizer; bijective, good avalanche.
constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based uniform in [0,1): a pure function of (seed, key, index),
// independent of draw order.
inline double counter_unit(std::uint64_t seed, std::uint64_t key, std::uint64_t index) {
    const std::uint64_t h = mix(seed ^ mix(key + 0x6a09e667f3bcc909ULL));
    const std::uint64_t v = mix(h ^ mix(index + 0xbb67ae8584caa73bULL));
    return static_cast<double>(v >> 11) * 0x1.0p-53;
}

// Sequential splitmix64 stream for everything that is naturally ordered
// (weight init, shuffles, augmentation draws, synthetic image content).
class Stream {
  public:
    explicit Stream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Symmetric draw in [-scale, scale].
    double next_symmetric(double scale) { return next_uniform(-scale, scale); }

    bool next_bernoulli(double p) { return next_unit() < p; }

    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    double next_gaussian() {
        double u1 = next_unit();
        if (u1 < 1e-300) u1 = 1e-300;
        const double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

  private:
    std::uint64_t state_;
};

}  // namespace uat::rng
