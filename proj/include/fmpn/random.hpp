#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fmpn {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
} // namespace detail

/// Mixes a seed with a stream tag so derived generators are decorrelated.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (tag + 1));
    return detail::splitmix64(s);
}

/// Deterministic random source (splitmix64). The standard-library
/// distributions are implementation-defined, so everything that can affect
/// results is generated here with fixed algorithms.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), state_(seed) {}

    std::uint64_t next_u64() { return detail::splitmix64(state_); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (two fresh draws per call).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    /// Uniform integer in [0, n). Modulo bias is negligible for our n.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent generator for a named sub-stream of this seed.
    Rng derive(std::uint64_t tag) const { return Rng(mix_seed(seed_, tag)); }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

} // namespace fmpn
