#pragma once

// Seeded random streams for the simulator and the random-feature embedding.
//
// Generator: std::mt19937_64 (output sequence fixed by the C++ standard).
// Seeding: SplitMix64 applied to (base_seed, stream index), so stream k of a
// run is the same no matter how many other streams exist or in which order
// they are consumed. Normal deviates use the Marsaglia polar method and
// bounded integers use Lemire's multiply-shift rejection; both are written
// here rather than taken from <random> because the standard distributions are
// implementation-defined. Golden outputs depend on all of this, so any change
// must bump kRngName.

#include <cstdint>
#include <random>

namespace sgdcurve {

inline constexpr const char* kRngName = "mt19937_64/splitmix64/polar-v1";

std::uint64_t splitmix64(std::uint64_t& state);

// Seed for independent substream `index` of a run seeded with `base_seed`.
std::uint64_t substream_seed(std::uint64_t base_seed, std::uint64_t index);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng substream(std::uint64_t base_seed, std::uint64_t index) {
    return Rng(substream_seed(base_seed, index));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  double normal();

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sgdcurve
