#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "photonstat/core.hpp"

namespace photonstat {

/// splitmix64; used to derive independent stream seeds from (seed, ids).
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t slab = 0) {
    return splitmix64(splitmix64(seed ^ 0xa076'1d64'78bd'642full) ^ splitmix64(stream * 0x9ddf'ea08'eb38'2d69ull + slab));
}

/// mt19937_64 with explicit variate transforms. The standard distributions
/// are implementation-defined, so every draw here is spelled out to keep
/// fixed-seed runs byte-identical across toolchains.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    /// uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// uniform in (0, 1]
    double uniform_pos() { return 1.0 - uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    double exponential(double mean) { return -mean * std::log(uniform_pos()); }

    /// standard normal via Box-Muller (one value per call, cached pair)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * kPi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Lorentzian (Cauchy) with the given half width at half maximum.
    double lorentzian(double hwhm) { return hwhm * std::tan(kPi * (uniform() - 0.5)); }

    /// index in [0, n)
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

  private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace photonstat
