#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sinesr {

// All randomness in the toolkit flows through this engine so a single seed
// reproduces a run bit for bit.
using Rng = std::mt19937_64;

// Mixes a global seed with a per-item index (splitmix64 finalizer). Workers
// that derive their stream this way produce the same result in any order.
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index);

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

// Uniform integer in [0, n).
int uniform_index(Rng& rng, int n);
double uniform_real(Rng& rng, double lo, double hi);
double normal_sample(Rng& rng, double mean, double stddev);
// Beta(a, b) via two gamma draws.
double beta_sample(Rng& rng, double a, double b);

}  // namespace sinesr
