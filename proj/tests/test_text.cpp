#include <doctest.h>

#include <set>

#include "mcqforge/errors.hpp"
#include "mcqforge/text.hpp"

using namespace mcqforge;

TEST_CASE("sha256 matches the FIPS 180-2 test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("digest_parts keeps part boundaries") {
  CHECK(digest_parts({"ab", "c"}) != digest_parts({"a", "bc"}));
  CHECK(digest_parts({"ab", "c"}) == digest_parts({"ab", "c"}));
  CHECK(digest_parts({"x"}) == sha256_hex("x"));
}

TEST_CASE("normalize_text composes to NFC and unifies line endings") {
  CHECK(normalize_text("e\xcc\x81") == "\xc3\xa9");
  CHECK(normalize_text("a\r\nb\rc\n") == "a\nb\nc\n");
  CHECK_THROWS_AS(normalize_text("\xff\xfe"), Error);
}

TEST_CASE("token estimate is additive over whitespace-joined spans") {
  CHECK(estimate_tokens("") == 0);
  CHECK(estimate_tokens("a") == 1);
  CHECK(estimate_tokens("abcdefgh") == 2);
  CHECK(estimate_tokens("radiosensitizer") == 3);
  const std::string a = "Ionizing radiation produces breaks.";
  const std::string b = "Ku binds the ends.";
  CHECK(estimate_tokens(a + " " + b) == estimate_tokens(a) + estimate_tokens(b));
  // Code points, not bytes.
  CHECK(estimate_tokens("\xc3\xa9\xc3\xa9\xc3\xa9\xc3\xa9") == 1);
}

TEST_CASE("whitespace folding and trimming") {
  CHECK(trim("  x y \n") == "x y");
  CHECK(fold_whitespace_lower("  The   Answer\n\tIS ") == "the answer is");
  CHECK(is_blank(" \n\t"));
  CHECK_FALSE(is_blank(" a "));
  CHECK(split_words(" a  bb\nccc ").size() == 3);
}

TEST_CASE("render_template fills placeholders and rejects unbound keys") {
  CHECK(render_template("Q: {{q}} / {{a}}", {{"q", "why"}, {"a", "{{q}}"}}) == "Q: why / {{q}}");
  CHECK_THROWS_AS(render_template("{{missing}}", {{"q", "x"}}), Error);
}

TEST_CASE("SplitMix64 reproduces the reference stream") {
  SplitMix64 rng(0);
  CHECK(rng.next() == 0xe220a8397b1dcdafull);
  CHECK(rng.next() == 0x6e789e6aa1b965f4ull);
  CHECK(rng.next() == 0x06c45d188009454full);
}

TEST_CASE("SplitMix64 bounded draws stay in range and cover it") {
  SplitMix64 rng(42);
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    const auto v = rng.below(7);
    REQUIRE(v < 7);
    seen.insert(v);
    const double u = rng.symmetric_unit();
    REQUIRE(u >= -1.0);
    REQUIRE(u < 1.0);
  }
  CHECK(seen.size() == 7);
}

TEST_CASE("seed_from_hex reads the first 16 hex digits") {
  CHECK(seed_from_hex("00000000000000ff") == 255);
  CHECK(seed_from_hex("00000000000000ffabc") == 255);
}
