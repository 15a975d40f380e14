#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace mcqforge {

/// Lower-case hex SHA-256 of the raw bytes.
std::string sha256_hex(std::string_view bytes);

/// SHA-256 over parts joined by the ASCII unit separator (0x1f), so that
/// ("ab","c") and ("a","bc") hash differently.
std::string digest_parts(std::initializer_list<std::string_view> parts);

/// Unicode NFC plus CRLF/CR -> LF. Throws Error(InvalidArgument) on invalid UTF-8.
std::string normalize_text(std::string_view text);

bool is_blank(std::string_view text) noexcept;
std::string_view trim(std::string_view text) noexcept;
std::string to_lower_ascii(std::string_view text);

/// Lower-cases ASCII and collapses every whitespace run to one space (trimmed).
std::string fold_whitespace_lower(std::string_view text);

std::vector<std::string_view> split_words(std::string_view text);

/// Approximate word-piece count: per whitespace-separated word,
/// max(1, codepoints / 4). Additive across whitespace-joined spans.
std::int64_t estimate_tokens(std::string_view text);

std::size_t utf8_length(std::string_view text) noexcept;

/// Replaces every "{{key}}" with the paired value.
std::string render_template(std::string_view tmpl,
                            std::initializer_list<std::pair<std::string_view, std::string_view>> values);

/// SplitMix64: portable, seedable stream used wherever results must be
/// identical across platforms and standard libraries.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
  std::uint64_t next() noexcept;
  /// Uniform in [0, bound) by rejection; bound > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  /// Uniform in [-1, 1).
  double symmetric_unit() noexcept;

 private:
  std::uint64_t state_;
};

/// First 16 hex digits of a digest as an integer seed.
std::uint64_t seed_from_hex(std::string_view hex);

}  // namespace mcqforge
