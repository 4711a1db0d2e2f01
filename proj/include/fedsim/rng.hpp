#pragma once

// Counter-based deterministic randomness. Every consumer derives a fresh
// stream from (master_seed, purpose, client, round, local_iter); equal tuples
// give byte-equal draw sequences, so reruns are reproducible and two
// algorithms fed the same tuples see the same data (common random numbers).

#include <cstdint>
#include <random>
#include <string_view>

namespace fedsim {

// 64-bit mix (splitmix64 finalizer). Good avalanche, cheap.
std::uint64_t mix64(std::uint64_t z);

// FNV-1a over a byte string; used for purpose labels and trace hashing.
std::uint64_t fnv1a64(std::string_view bytes);

class RandomStream {
 public:
  RandomStream(std::uint64_t k0, std::uint64_t k1);

  double normal(double mean, double stddev);
  double uniform01();              // [0, 1)
  int uniform_index(int n);        // {0, ..., n-1}
  std::uint64_t next_u64();

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

// Derivation handle bound to one master seed.
class StreamFactory {
 public:
  explicit StreamFactory(std::int64_t master_seed) : master_(static_cast<std::uint64_t>(master_seed)) {}

  // client = -1 for server-side draws (selection, pooled batches, centers).
  RandomStream make(std::string_view purpose, int client, long round, int local_iter) const;
  std::int64_t master_seed() const { return static_cast<std::int64_t>(master_); }

 private:
  std::uint64_t master_;
};

inline RandomStream derive_stream(std::int64_t master_seed, std::string_view purpose, int client,
                                  long round, int local_iter) {
  return StreamFactory(master_seed).make(purpose, client, round, local_iter);
}

}  // namespace fedsim
