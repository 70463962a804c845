#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mealsynth {

// Deterministic RNG with hand-rolled distributions. std::mt19937_64 is
// portable, but the std distribution adapters are not, so uniform/normal
// are implemented here to keep artifacts byte-identical across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    // splitmix64 expansion of the seed into the xoshiro256** state
    uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      s = z ^ (z >> 31);
    }
    has_spare_ = false;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n); n must be > 0
  int64_t uniform_int(int64_t n) {
    // rejection sampling to avoid modulo bias
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
  }

  // standard normal via Box-Muller (cached spare)
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  void fill_normal(std::vector<double>& v, double mean, double stddev) {
    for (auto& x : v) x = normal(mean, stddev);
  }

  void fill_uniform(std::vector<double>& v, double lo, double hi) {
    for (auto& x : v) x = uniform(lo, hi);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(i + 1)]);
    }
  }

  // derive an independent stream, e.g. per epoch or per worker
  Rng fork(uint64_t stream) {
    Rng r(0);
    r.state_[0] = state_[0] ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    r.state_[1] = state_[1] + 0xbf58476d1ce4e5b9ULL * (stream + 1);
    r.state_[2] = state_[2] ^ rotl(stream + 0x94d049bb133111ebULL, 13);
    r.state_[3] = state_[3] + (stream << 1 | 1);
    for (int i = 0; i < 8; ++i) r.next_u64();
    return r;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t state_[4] = {};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mealsynth
