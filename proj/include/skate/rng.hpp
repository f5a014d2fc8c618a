#pragma once

#include <cmath>
#include <cstdint>

namespace skate {

// Counter-splitting RNG. Every consumer owns a stream addressed by
// (master seed, purpose, index); draws inside a stream walk a splitmix64
// sequence. Changing the number of environments or sweep cells never
// perturbs the draws of an unrelated stream.
class Rng {
 public:
  Rng() : state_(0x9e3779b97f4a7c15ull) {}
  explicit Rng(uint64_t seed) : state_(scramble(seed)) {}

  static Rng stream(uint64_t master, uint64_t purpose, uint64_t index = 0) {
    uint64_t s = scramble(master);
    s = scramble(s ^ (purpose * 0xbf58476d1ce4e5b9ull));
    s = scramble(s ^ (index * 0x94d049bb133111ebull));
    Rng r;
    r.state_ = s;
    return r;
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // {0, 1, ..., n-1}
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

  // Box-Muller with a cached spare so draws stay reproducible everywhere.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static uint64_t scramble(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream purposes, kept in one place so ids never collide.
namespace rngp {
constexpr uint64_t kEnvEpisode = 1;
constexpr uint64_t kEnvPerturb = 2;
constexpr uint64_t kPolicySample = 3;
constexpr uint64_t kNetInit = 4;
constexpr uint64_t kEvalCell = 5;
constexpr uint64_t kScanNoise = 6;
constexpr uint64_t kShuffle = 7;
constexpr uint64_t kMisc = 8;
}  // namespace rngp

}  // namespace skate
