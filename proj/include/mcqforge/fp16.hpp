#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace mcqforge {

inline constexpr float kHalfMax = 65504.0f;

/// IEEE-754 binary16 encoding with round-to-nearest-even.
/// Throws Error(Overflow) when |x| > 65504 or x is not finite.
std::uint16_t float_to_half(float x);

/// Exact widening of a binary16 bit pattern.
float half_to_float(std::uint16_t bits) noexcept;

struct QuantizedVector {
  std::vector<std::uint16_t> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const QuantizedVector&) const = default;
};

template <typename Derived>
QuantizedVector quantize_fp16(const Eigen::MatrixBase<Derived>& v) {
  QuantizedVector q;
  q.values.resize(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) q.values[static_cast<std::size_t>(i)] = float_to_half(static_cast<float>(v(i)));
  return q;
}

inline Eigen::VectorXf dequantize_fp16(const QuantizedVector& q) {
  Eigen::VectorXf v(static_cast<Eigen::Index>(q.dim()));
  for (std::size_t i = 0; i < q.dim(); ++i) v(static_cast<Eigen::Index>(i)) = half_to_float(q.values[i]);
  return v;
}

}  // namespace mcqforge
