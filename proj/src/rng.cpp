#include "cvp/rng.hpp"

#include <cmath>
#include <numbers>

namespace cvp {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
constexpr std::uint64_t kBlocksPerStep = kMaxFactors / 2;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform on (0, 1].
inline double to_unit(std::uint32_t a, std::uint32_t b) {
  const std::uint64_t bits = ((static_cast<std::uint64_t>(a) << 32) | b) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Philox4x32::Block Philox4x32::operator()(Block c) const noexcept {
  std::uint32_t k0 = key_[0];
  std::uint32_t k1 = key_[1];
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c[0], hi0, lo0);
    mulhilo(kMul1, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return c;
}

std::array<double, 2> NormalStream::pair(std::uint64_t step, std::uint64_t block) const noexcept {
  const std::uint64_t index = step * kBlocksPerStep + block;
  const Philox4x32::Block out = gen_({static_cast<std::uint32_t>(index),
                                      static_cast<std::uint32_t>(index >> 32),
                                      static_cast<std::uint32_t>(stream_),
                                      static_cast<std::uint32_t>(stream_ >> 32)});
  const double u1 = to_unit(out[0], out[1]);
  const double u2 = to_unit(out[2], out[3]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return {radius * std::cos(angle), radius * std::sin(angle)};
}

void NormalStream::draw(std::uint64_t step, double* out, std::size_t dim) const noexcept {
  for (std::size_t k = 0; k < dim; k += 2) {
    const auto z = pair(step, k / 2);
    out[k] = z[0];
    if (k + 1 < dim) out[k + 1] = z[1];
  }
}

double NormalStream::at(std::uint64_t step, std::size_t factor) const noexcept {
  return pair(step, factor / 2)[factor % 2];
}

}  // namespace cvp
