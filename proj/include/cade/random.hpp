#pragma once

// Seed derivation and worker-count policy shared by parallel stages.

#include <cstdint>

namespace cade {

/// Seed for item `index` derived from a base seed (SplitMix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// `requested` workers (at least 1), capped by CADE_NUM_WORKERS when set.
int worker_limit(int requested);

}  // namespace cade
