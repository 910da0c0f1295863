#include "madview/rng.hpp"

#include <cmath>
#include <sstream>

namespace madview {

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

Rng Rng::deserialize(const std::string& state) {
  Rng r(0);
  std::istringstream is(state);
  is >> r.engine_;
  if (is.fail()) throw ValidationError("rng state failed to parse");
  return r;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view component) {
  const std::uint64_t tag = fnv1a64(component);
  return splitmix64(splitmix64(master ^ (tag * 0x9e3779b97f4a7c15ull)) + tag);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view component,
                          std::uint64_t index) {
  return splitmix64(derive_seed(master, component) ^ splitmix64(index));
}

ComponentSeeds derive_seeds(std::uint64_t master) {
  ComponentSeeds s;
  s.env = derive_seed(master, "env");
  s.init = derive_seed(master, "init");
  s.replay = derive_seed(master, "replay");
  s.augment = derive_seed(master, "augment");
  return s;
}

}  // namespace madview
