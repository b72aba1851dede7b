#pragma once

#include <cmath>
#include <cstdint>

namespace sof {

// Counter-based random stream.  Every draw is a pure function of
// (seed, iteration, trajectory, purpose, counter), so trajectories can be
// generated in any order — or concurrently — and still reproduce bitwise.
// std::normal_distribution is implementation-defined, which would break the
// byte-identical-log contract across toolchains, hence the hand-rolled
// Box-Muller on top of the splitmix64 finalizer.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t iteration,
             std::uint64_t trajectory, std::uint64_t purpose = 0) {
    key_ = mix(seed + kGolden);
    key_ = mix(key_ ^ (iteration + kGolden));
    key_ = mix(key_ ^ (trajectory + kGolden));
    key_ = mix(key_ ^ (purpose + kGolden));
  }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  // Uniform on (0, 1]; never returns 0 so log() below is safe.
  double uniform01() {
    return 1.0 - static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; draws two uniforms, caches the sine leg.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * M_PI * u2;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

  // splitmix64 finalizer (public domain).
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Stream purposes, so draws for different roles never collide.
namespace rng_purpose {
inline constexpr std::uint64_t kInitialState = 1;
inline constexpr std::uint64_t kPerturbation = 2;
inline constexpr std::uint64_t kProposal = 3;
}  // namespace rng_purpose

}  // namespace sof
