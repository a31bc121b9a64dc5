#pragma once

#include <array>
#include <cstdint>

namespace cvp {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A draw is a pure function of (key, counter), so every path can own an
/// independent stream without any shared state between threads.
class Philox4x32 {
 public:
  using Block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  [[nodiscard]] Block operator()(Block counter) const noexcept;

 private:
  std::array<std::uint32_t, 2> key_;
};

/// Standard normal variates addressed by (stream, step, factor).
///
/// Factor k at step n always comes from the same counter block, independent of
/// how many factors the caller draws, so models that share leading factors
/// see identical noise for them.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream) noexcept
      : gen_(seed), stream_(stream) {}

  /// Fills `out[0..dim)` with the normals for time step `step`.
  void draw(std::uint64_t step, double* out, std::size_t dim) const noexcept;

  [[nodiscard]] double at(std::uint64_t step, std::size_t factor) const noexcept;

 private:
  [[nodiscard]] std::array<double, 2> pair(std::uint64_t step, std::uint64_t block) const noexcept;

  Philox4x32 gen_;
  std::uint64_t stream_;
};

/// Maximum number of Brownian factors addressable per step.
inline constexpr std::size_t kMaxFactors = 512;

}  // namespace cvp
