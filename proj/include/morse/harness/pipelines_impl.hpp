#pragma once

#include <vector>

#include "morse/parallel.hpp"
#include "morse/random.hpp"

namespace morse::harness {

inline constexpr Index kChainChunk = 512;

template <typename Fn>
Matrix sample_chains(Index dim, Index chains, std::uint64_t seed, int threads, Fn&& sample) {
    Matrix out(dim, chains);
    const long chunks = static_cast<long>((chains + kChainChunk - 1) / kChainChunk);
    parallel_for(chunks, threads, [&](long c) {
        const Index lo = c * kChainChunk;
        const Index len = std::min(kChainChunk, chains - lo);
        std::vector<NoiseStream> streams;
        streams.reserve(static_cast<std::size_t>(len));
        for (Index j = 0; j < len; ++j) {
            streams.emplace_back(derive_seed(seed, SeedPurpose::Chains, static_cast<std::uint64_t>(lo + j)));
        }
        out.middleCols(lo, len) = sample(std::span<NoiseStream>(streams));
    });
    return out;
}

}  // namespace morse::harness
