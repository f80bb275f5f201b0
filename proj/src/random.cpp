#include "cade/random.hpp"

#include <algorithm>
#include <cstdlib>

namespace cade {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int worker_limit(int requested) {
  int n = std::max(1, requested);
  if (const char* env = std::getenv("CADE_NUM_WORKERS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

}  // namespace cade
