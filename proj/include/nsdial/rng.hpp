#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace nsdial {

/// Seeded generator with explicit float mappings so that results depend only
/// on the seed, not on the standard library's distribution internals.
class Rng {
  public:
    explicit Rng(uint64_t seed) : seed_(seed), gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

    uint32_t raw() { return gen_(); }

    // uniform in (0,1), never exactly 0 or 1
    double uniform() { return (static_cast<double>(gen_()) + 0.5) / 4294967296.0; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inverse-CDF Gumbel(0,1); the clamp keeps log() off the singularities
    double gumbel() {
        double u = uniform();
        if (u < 1e-20) u = 1e-20;
        if (u > 1.0 - 1e-16) u = 1.0 - 1e-16;
        return -std::log(-std::log(u));
    }

    // Box-Muller, one value per call
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // uniform integer in [0, n)
    uint32_t below(uint32_t n) { return n ? gen_() % n : 0; }

    // derived generator for an independent stream (per-dialogue seeds etc.)
    Rng fork(uint64_t stream) const {
        uint64_t z = seed_ + 0x9e3779b97f4a7c15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

    uint64_t seed() const { return seed_; }

  private:
    uint64_t seed_;
    std::mt19937 gen_;
};

}  // namespace nsdial
