#pragma once

#include <cstdint>
#include <span>

namespace voxboost {

/// SplitMix64 step. Used for seeding and for deriving child seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Combine a parent seed with an index into an independent child seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// xoshiro256** 1.0 (Blackman & Vigna). State is expanded from a 64-bit
/// seed with SplitMix64. All derived draws below are defined in terms of
/// next() only, so sequences are identical on every platform and compiler.
class Xoshiro256 {
public:
    explicit Xoshiro256(std::uint64_t seed = 0);

    std::uint64_t next();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, bound), rejection sampling (no modulo bias).
    std::uint64_t below(std::uint64_t bound);

    /// Standard normal via Box-Muller; no cached second variate.
    double normal();

    /// Fisher-Yates shuffle, swapping from the back.
    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    std::uint64_t s_[4];
};

} // namespace voxboost
