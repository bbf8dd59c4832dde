#ifndef ECOC_RNG_HPP
#define ECOC_RNG_HPP

#include <cstdint>
#include <cstddef>

namespace ecoc {

/// SplitMix64 finalizer. Full 64-bit avalanche, used for seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic child seed for substream `salt` of stream `seed`.
/// Used for per-classifier seeds, per-epoch shuffles and Monte Carlo chunks.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    return mix64(seed ^ mix64(salt + 1));
}

/// Small deterministic generator (SplitMix64). The standard <random>
/// distributions are implementation-defined, so all draws used by the
/// library go through the helpers below and produce identical streams
/// on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform double in [-s, s).
    double next_symmetric(double s) { return (2.0 * next_double() - 1.0) * s; }

    /// Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = -n % n; // 2^64 mod n
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    /// true with probability p.
    bool bernoulli(double p) { return next_double() < p; }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

} // namespace ecoc

#endif
