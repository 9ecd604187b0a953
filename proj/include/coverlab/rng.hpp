#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace coverlab {

// Identifier recorded in experiment records.
inline constexpr const char* kRngName = "mt19937_64/seed_seq(splitmix64(seed),splitmix64(stream))";

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic random stream. Distinct (seed, stream) pairs give unrelated streams:
// the engine is seeded through std::seed_seq from the splitmix64 mixes of both words.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next() { return engine_(); }
  // Uniform on {0, ..., k-1} via multiply-shift on the high 32 bits (bias < 2^-32 k).
  int below(int k) { return static_cast<int>(((engine_() >> 32) * static_cast<std::uint64_t>(k)) >> 32); }
  std::uint64_t below64(std::uint64_t k);
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() { return normal_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

// Stream derivation for replica `replica` of a component tagged `purpose`.
std::uint64_t stream_id(std::uint64_t purpose, std::uint64_t replica);
// Same, with the purpose given as a tag (hashed with 64-bit FNV-1a).
std::uint64_t stream_id(std::string_view purpose, std::uint64_t replica);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace coverlab
