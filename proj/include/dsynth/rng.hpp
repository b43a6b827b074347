#ifndef DSYNTH_RNG_HPP
#define DSYNTH_RNG_HPP

#include <cstdint>
#include <random>

namespace dsynth {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Stream seed for (master, generation, individual); independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t generation,
                                 std::uint64_t individual) {
    return splitmix64(splitmix64(splitmix64(master) ^ generation) ^ individual);
}

// Uniform in [0, 1) from the top 53 bits; bit-identical across standard libraries.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

}  // namespace dsynth

#endif  // DSYNTH_RNG_HPP
