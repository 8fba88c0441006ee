#pragma once

// Seeded RNG plumbing. mt19937_64 for the stream, splitmix64 to derive
// independent child seeds (per start, per sample, ...).

#include <cmath>
#include <cstdint>
#include <random>

namespace pmbp {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return splitmix64(splitmix64(seed) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform on [0,1) with 53 random bits; portable, unlike std distributions
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    // uniform on (0,1]
    double uniform_pos() { return 1.0 - uniform(); }
    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    std::mt19937_64& engine() { return eng_; }

private:
    std::mt19937_64 eng_;
};

}  // namespace pmbp
