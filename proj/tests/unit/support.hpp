#pragma once

// Seeded generators and small fixtures shared by the unit tests.

#include <filesystem>
#include <random>
#include <string>

#include "bridgetriage/bnn.hpp"
#include "bridgetriage/domain.hpp"
#include "bridgetriage/inference.hpp"

namespace bt::test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }
  std::uint64_t u64() { return rng_(); }
  double normal() { return std::normal_distribution<double>()(rng_); }

  // Uniform over the canonical schema box.
  BridgeParams params() {
    const auto& s = FeatureSchema::canonical();
    std::array<double, kFeatureCount> v{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) v[i] = uniform(s[i].lo, s[i].hi);
    return BridgeParams::from_array(v);
  }

 private:
  std::mt19937_64 rng_;
};

Dataset oracle_rows(std::size_t n, std::uint64_t seed);

// Untrained heads on a 10 -> 4 -> 1 network with identity standardization.
SurrogateSet stub_surrogates(std::uint64_t seed);

// Heads on a 10 -> 16 -> 1 network, briefly trained on oracle rows.
// Built once per process.
const SurrogateSet& small_surrogates();

// Single-layer head mu = softplus(w . x + b) on raw features. Only the bias
// carries posterior spread (pre-activation std `bias_std`).
BnnModel linear_head(Head head, const std::array<double, kFeatureCount>& w, double b, double bias_std = 0.0);

// Three heads with constant outputs and zero spread.
SurrogateSet constant_surrogates(double mu_ms, double mu_mc, double mu_v);

std::filesystem::path scratch_dir(const std::string& name);

}  // namespace bt::test
