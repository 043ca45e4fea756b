#pragma once

#include <cstdint>
#include <random>

#include "morse/types.hpp"

namespace morse {

/// Purposes used to split one experiment seed into independent streams.
enum class SeedPurpose : std::uint64_t {
    Dataset = 1,
    Init = 2,
    Chains = 3,
    Training = 4,
    Validation = 5,
    Target = 6,
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Deterministic child seed: mix64(mix64(seed ^ purpose) + index).
std::uint64_t derive_seed(std::uint64_t seed, SeedPurpose purpose, std::uint64_t index = 0);

/// Seeded source of standard-normal and uniform draws. One stream per chain.
class NoiseStream {
public:
    explicit NoiseStream(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    Vector normal(Index dim);
    Matrix normal(Index rows, Index cols);

    // Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace morse
