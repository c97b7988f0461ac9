#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "cavecheck/geom.hpp"

namespace cavecheck {

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();

  /// Uniform in (0, 1].
  double uniform_open0();

 private:
  std::uint64_t state_;
};

/// Standard normal draws via Box-Muller over a SplitMix64 stream.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : rng_(seed) {}

  double next();
  Vec3 next_vec3(double sigma);

 private:
  SplitMix64 rng_;
  std::optional<double> spare_;
};

/// Seed for a named stream, so each sensor owns an independent sequence.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace cavecheck
