#pragma once
#include <cmath>
#include <cstdint>

namespace pim {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Counter-based substream generator. Stream (seed, substream) is fully
// determined by its identifiers, so draws can be partitioned across any
// number of workers without changing a single bit of output.
class SubstreamRng {
 public:
  SubstreamRng(std::uint64_t seed, std::uint64_t substream)
      : state_(detail::mix64(detail::mix64(seed + kGamma) ^
                             (substream * 0xD1B54A32D192ED03ULL))) {}

  std::uint64_t next_u64() {
    state_ += kGamma;
    return detail::mix64(state_);
  }

  // Uniform in the open interval (0, 1); never returns 0 so logs are safe.
  double next_uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Box-Muller without caching: every normal consumes exactly two
  // uniforms, keeping the stream layout independent of call history.
  double next_normal() {
    const double u1 = next_uniform();
    const double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;
  static constexpr double kPi = 3.14159265358979323846;
  std::uint64_t state_;
};

}  // namespace pim
