#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace advnet {

/// Seeded RNG used everywhere randomness is needed; state serializes to text
/// so checkpoints can resume bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  double gaussian(double mean = 0.0, double std = 1.0) {
    std::normal_distribution<double> d(mean, std);
    return d(engine_);
  }

  // [lo, hi] inclusive
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uniform_int_distribution<std::int64_t> d(lo, hi);
    return d(engine_);
  }

  bool coin() { return uniform_int(0, 1) == 1; }

  std::uint64_t raw() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
  }

  /// Deterministic derived stream, e.g. one per (model, attack) pair.
  Rng fork(std::uint64_t salt) {
    std::uint64_t s = engine_() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL);
    return Rng(s);
  }

 private:
  std::mt19937_64 engine_;
};

/// Stable seed for an attack stream keyed by (base seed, model id, attack tag).
inline std::uint64_t derive_seed(std::uint64_t base, const std::string& a,
                                 const std::string& b) {
  std::uint64_t h = base ^ 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff51afd7ed558ccdULL;
    h *= 0xc4ceb9fe1a85ec53ULL;
  };
  mix(a);
  mix(b);
  return h;
}

}  // namespace advnet
