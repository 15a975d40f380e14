#include "mcqforge/fp16.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "mcqforge/errors.hpp"

namespace mcqforge {

std::uint16_t float_to_half(float x) {
  if (!std::isfinite(x) || std::fabs(x) > kHalfMax) {
    throw Error(ErrorCode::Overflow, "value outside binary16 range: " + std::to_string(x));
  }
  const auto f = std::bit_cast<std::uint32_t>(x);
  const auto sign = static_cast<std::uint16_t>((f >> 16) & 0x8000u);
  const std::uint32_t abs_bits = f & 0x7fffffffu;

  if (abs_bits < 0x38800000u) {
    // Below the smallest normal half (2^-14): subnormal grid of step 2^-24.
    // |x| * 2^24 is exact in double; nearbyint rounds half to even.
    const double scaled = static_cast<double>(std::bit_cast<float>(abs_bits)) * 16777216.0;
    return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(std::nearbyint(scaled)));
  }

  const std::uint32_t exponent = (abs_bits >> 23) - 127u + 15u;
  const std::uint32_t mantissa = abs_bits & 0x7fffffu;
  std::uint32_t half = (exponent << 10) | (mantissa >> 13);
  const std::uint32_t rest = mantissa & 0x1fffu;
  if (rest > 0x1000u || (rest == 0x1000u && (half & 1u))) ++half;  // carry may bump the exponent
  return static_cast<std::uint16_t>(sign | half);
}

float half_to_float(std::uint16_t bits) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  const std::uint32_t exponent = (bits >> 10) & 0x1fu;
  const std::uint32_t mantissa = bits & 0x3ffu;
  if (exponent == 0) {
    const float magnitude = std::ldexp(static_cast<float>(mantissa), -24);
    return sign ? -magnitude : magnitude;
  }
  if (exponent == 0x1f) {
    return std::bit_cast<float>(sign | 0x7f800000u | (mantissa << 13));
  }
  return std::bit_cast<float>(sign | ((exponent - 15u + 127u) << 23) | (mantissa << 13));
}

}  // namespace mcqforge
