#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace bt {

using Rng = std::mt19937_64;

// Derives an independent 64-bit seed for substream `stream` of `seed`
// (splitmix64 finalizer applied twice). Used wherever work is indexed so
// that results do not depend on evaluation schedule.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

// Uniform double in [0, 1) with 53 random bits.
double uniform01(Rng& rng);

// Uniform integer in [0, bound) without modulo bias.
std::uint64_t uniform_index(Rng& rng, std::uint64_t bound);

void fill_standard_normal(Rng& rng, std::span<double> out);

}  // namespace bt
