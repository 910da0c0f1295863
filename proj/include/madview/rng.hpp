#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>

#include "madview/common.hpp"

namespace madview {

// Deterministic random stream. All distribution transforms are hand-rolled on
// top of mt19937_64 so sequences are identical across standard libraries and
// serialize cleanly. normal() consumes exactly two engine draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Double-path bias is below 1 part in 2^40 for
  // the range sizes used here.
  int uniform_int(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }

  // Box-Muller; the spare value is discarded to keep the stream stateless.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586477 * u2);
  }

  std::string serialize() const;
  static Rng deserialize(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

// Named per-component seeds resolved from one master seed.
struct ComponentSeeds {
  std::uint64_t env = 0;
  std::uint64_t init = 0;
  std::uint64_t replay = 0;
  std::uint64_t augment = 0;

  bool operator==(const ComponentSeeds&) const = default;
};

// Keyed derivation: mixes the master seed with a hash of the component name
// through splitmix64. Same inputs always produce the same seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view component);

// Extra mixing for streams keyed by (name, counter), e.g. evaluation episodes.
std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                          std::uint64_t index);

ComponentSeeds derive_seeds(std::uint64_t master);

}  // namespace madview
