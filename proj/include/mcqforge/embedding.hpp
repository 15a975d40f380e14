#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mcqforge/errors.hpp"
#include "mcqforge/retry.hpp"

namespace mcqforge {

using EmbeddingVector = Eigen::VectorXf;

/// Unit-L2 copy of `v`, with the norm taken in double.
/// Throws Error(ZeroVector) when the norm is zero or not finite.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> normalized(const Eigen::MatrixBase<Derived>& v) {
  const double norm = std::sqrt(v.template cast<double>().squaredNorm());
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error(ErrorCode::ZeroVector, "cannot normalize a zero vector");
  return (v.template cast<double>() / norm).template cast<typename Derived::Scalar>();
}

inline EmbeddingVector normalize(const EmbeddingVector& v) { return normalized(v); }

template <typename A, typename B>
double cosine(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return normalized(a).template cast<double>().dot(normalized(b).template cast<double>());
}

enum class EmbeddingBackend { remote_http, deterministic_test };

EmbeddingBackend embedding_backend_from_string(std::string_view s);

struct EmbeddingConfig {
  EmbeddingBackend backend = EmbeddingBackend::deterministic_test;
  std::size_t dim = 64;
  std::uint64_t seed = 0;
  std::size_t max_batch = 64;
  std::string url;    // remote only; MCQFORGE_EMBED_URL overrides
  std::string model;  // remote only
  std::chrono::milliseconds timeout{60000};
  RetryPolicy retry;
};

/// Text -> vector contract. Implementations are order-preserving and keep
/// `dim()` constant for their lifetime.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t max_batch() const = 0;
  virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) = 0;
};

/// Offline backend: each word hashes (with the seed) to a pseudo-random
/// direction; a text embeds to the normalized sum over its lower-cased word
/// multiset. Same words give the same vector on any platform.
class DeterministicEmbedder final : public Embedder {
 public:
  explicit DeterministicEmbedder(std::size_t dim, std::uint64_t seed = 0, std::size_t max_batch = 1024);

  std::size_t dim() const override { return dim_; }
  std::size_t max_batch() const override { return max_batch_; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

  EmbeddingVector embed(std::string_view text) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::size_t max_batch_;
};

/// Hosted embedder speaking `{"input":[...]}` -> `{"data":[{"embedding":[...]}]}`.
class RemoteEmbedder final : public Embedder {
 public:
  explicit RemoteEmbedder(EmbeddingConfig cfg, Sleeper sleeper = {});

  std::size_t dim() const override { return cfg_.dim; }
  std::size_t max_batch() const override { return cfg_.max_batch; }
  std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) override;

 private:
  EmbeddingConfig cfg_;
  Sleeper sleeper_;
};

std::unique_ptr<Embedder> make_embedder(const EmbeddingConfig& cfg);

/// Splits `texts` into backend-sized batches.
std::vector<EmbeddingVector> embed_all(Embedder& embedder, std::span<const std::string> texts);

/// Lower-cased alphanumeric word tokens (ASCII letters/digits, other bytes kept).
std::vector<std::string> embedding_words(std::string_view text);

}  // namespace mcqforge
