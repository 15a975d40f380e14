#pragma once

#include <algorithm>
#include <chrono>
#include <functional>

#include "mcqforge/text.hpp"

namespace mcqforge {

/// Exponential backoff with multiplicative jitter.
struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_delay{500};
  double multiplier = 2.0;
  std::chrono::milliseconds max_delay{30000};
  double jitter = 0.2;  // delay scaled by a factor in [1 - jitter, 1 + jitter]
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Delay before retry number `failed_attempts` (1 after the first failure).
inline std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int failed_attempts, SplitMix64& rng) {
  double delay = static_cast<double>(policy.initial_delay.count());
  for (int i = 1; i < failed_attempts; ++i) delay *= policy.multiplier;
  delay = std::min(delay, static_cast<double>(policy.max_delay.count()));
  delay *= 1.0 + policy.jitter * rng.symmetric_unit();
  return std::chrono::milliseconds(static_cast<long long>(std::max(0.0, delay)));
}

}  // namespace mcqforge
