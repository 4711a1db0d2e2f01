#include "fedsim/rng.hpp"

namespace fedsim {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

namespace {
std::uint64_t absorb(std::uint64_t h, std::uint64_t v) {
  // hash_combine-style: order-sensitive so (client, round) != (round, client)
  return mix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
}
}  // namespace

RandomStream::RandomStream(std::uint64_t k0, std::uint64_t k1) {
  std::seed_seq seq{static_cast<std::uint32_t>(k0), static_cast<std::uint32_t>(k0 >> 32),
                    static_cast<std::uint32_t>(k1), static_cast<std::uint32_t>(k1 >> 32)};
  eng_.seed(seq);
}

double RandomStream::normal(double mean, double stddev) { return mean + stddev * gauss_(eng_); }

double RandomStream::uniform01() {
  return std::uniform_real_distribution<double>(0.0, 1.0)(eng_);
}

int RandomStream::uniform_index(int n) {
  return std::uniform_int_distribution<int>(0, n - 1)(eng_);
}

std::uint64_t RandomStream::next_u64() { return eng_(); }

RandomStream StreamFactory::make(std::string_view purpose, int client, long round,
                                 int local_iter) const {
  std::uint64_t h = mix64(master_);
  h = absorb(h, fnv1a64(purpose));
  h = absorb(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(client)));
  h = absorb(h, static_cast<std::uint64_t>(round));
  h = absorb(h, static_cast<std::uint64_t>(local_iter));
  return RandomStream(h, mix64(h));
}

}  // namespace fedsim
