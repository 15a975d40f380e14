#include <doctest.h>

#include <atomic>
#include <cstdlib>

#include "local_server.hpp"
#include "mcqforge/embedding.hpp"
#include "mcqforge/errors.hpp"
#include "mcqforge/json_io.hpp"
#include "mcqforge/text.hpp"

using namespace mcqforge;

TEST_CASE("normalize scales to unit length") {
  Eigen::VectorXf v(2);
  v << 3, 4;
  const auto n = normalize(v);
  CHECK(n(0) == doctest::Approx(0.6));
  CHECK(n(1) == doctest::Approx(0.8));
  CHECK(normalize(n).isApprox(n));
  CHECK_THROWS_AS(normalize(Eigen::VectorXf::Zero(3)), Error);

  SplitMix64 rng(3);
  for (int t = 0; t < 100; ++t) {
    Eigen::VectorXf r(64);
    for (Eigen::Index i = 0; i < 64; ++i) r(i) = static_cast<float>(rng.symmetric_unit() * 1000.0);
    const double norm = normalize(r).cast<double>().norm();
    REQUIRE(norm >= 1.0 - 1e-6);
    REQUIRE(norm <= 1.0 + 1e-6);
  }
}

TEST_CASE("deterministic backend is reproducible and order-preserving") {
  DeterministicEmbedder a(64, 9);
  DeterministicEmbedder b(64, 9);
  const std::vector<std::string> texts = {"x", "x", "alpha beta", "gamma"};
  const auto va = a.embed_batch(texts);
  const auto vb = b.embed_batch(texts);
  REQUIRE(va.size() == 4);
  CHECK(va[0] == va[1]);
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(va[i] == vb[i]);
  CHECK(va[2] != va[3]);
  for (const auto& v : va) {
    CHECK(v.size() == 64);
    CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-6));
  }
  // A different seed gives a different space.
  CHECK(DeterministicEmbedder(64, 10).embed("alpha beta") != va[2]);
}

TEST_CASE("deterministic backend depends only on the word multiset") {
  DeterministicEmbedder e(64, 1);
  CHECK(e.embed("beta alpha") == e.embed("alpha beta"));
  CHECK(e.embed("Alpha, BETA!") == e.embed("alpha beta"));
  CHECK(e.embed("alpha alpha beta") != e.embed("alpha beta"));
}

TEST_CASE("word overlap raises cosine similarity") {
  DeterministicEmbedder e(64, 0);
  const auto base = e.embed("radiation dose");
  CHECK(cosine(base, e.embed("radiation dose gray")) > cosine(base, e.embed("piano sonata")));
  // Each word contributes an independent direction, so sharing 2 of 3 words
  // gives a cosine near 2 / sqrt(2 * 3).
  CHECK(cosine(base, e.embed("radiation dose gray")) == doctest::Approx(0.816).epsilon(0.25));
}

TEST_CASE("embed_all splits into backend batches without reordering") {
  DeterministicEmbedder small(16, 2, 3);
  std::vector<std::string> texts;
  for (int i = 0; i < 10; ++i) texts.push_back("text number " + std::to_string(i));
  const auto all = embed_all(small, texts);
  REQUIRE(all.size() == 10);
  for (std::size_t i = 0; i < texts.size(); ++i) CHECK(all[i] == small.embed(texts[i]));
  CHECK_THROWS_AS(small.embed_batch(texts), Error);
  CHECK(embed_all(small, std::vector<std::string>{}).empty());
}

TEST_CASE("remote backend speaks the embeddings wire format and retries transient failures") {
  std::atomic<int> hits{0};
  testkit::LocalServer server("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    if (hits.fetch_add(1) == 0) {
      res.status = 503;
      return;
    }
    const auto body = json::parse(req.body);
    json data = json::array();
    const auto& input = body.at("input");
    // Reply in reverse order with explicit indexes.
    for (std::size_t i = input.size(); i-- > 0;) {
      const float x = static_cast<float>(input[i].get<std::string>().size());
      data.push_back({{"index", i}, {"embedding", {x, 1.0f, 0.0f}}});
    }
    res.set_content(json{{"data", data}}.dump(), "application/json");
  });

  EmbeddingConfig cfg;
  cfg.backend = EmbeddingBackend::remote_http;
  cfg.dim = 3;
  cfg.url = server.url() + "/embed";
  cfg.retry.max_attempts = 3;
  std::vector<std::chrono::milliseconds> sleeps;
  RemoteEmbedder remote(cfg, [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  const std::vector<std::string> texts = {"a", "bbb"};
  const auto out = remote.embed_batch(texts);
  REQUIRE(out.size() == 2);
  CHECK(out[0](0) == 1.0f);
  CHECK(out[1](0) == 3.0f);
  CHECK(hits.load() == 2);
  CHECK(sleeps.size() == 1);

  cfg.dim = 4;
  RemoteEmbedder wrong_dim(cfg, [](std::chrono::milliseconds) {});
  CHECK_THROWS_AS(wrong_dim.embed_batch(texts), Error);
}

TEST_CASE("unreachable remote backend is reported as unavailable") {
  EmbeddingConfig cfg;
  cfg.backend = EmbeddingBackend::remote_http;
  cfg.dim = 3;
  cfg.url = "http://127.0.0.1:1/embed";
  cfg.timeout = std::chrono::milliseconds(500);
  cfg.retry.max_attempts = 2;
  RemoteEmbedder remote(cfg, [](std::chrono::milliseconds) {});
  try {
    remote.embed_batch(std::vector<std::string>{"x"});
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmbeddingBackendUnavailable);
  }
}
