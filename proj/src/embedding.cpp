#include "mcqforge/embedding.hpp"

#include <cctype>
#include <cstdlib>
#include <thread>

#include "mcqforge/http.hpp"
#include "mcqforge/json_io.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

EmbeddingBackend embedding_backend_from_string(std::string_view s) {
  if (s == "remote_http") return EmbeddingBackend::remote_http;
  if (s == "deterministic_test") return EmbeddingBackend::deterministic_test;
  throw Error(ErrorCode::InvalidArgument, "unknown embedding backend: " + std::string(s));
}

std::vector<std::string> embedding_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

DeterministicEmbedder::DeterministicEmbedder(std::size_t dim, std::uint64_t seed, std::size_t max_batch)
    : dim_(dim), seed_(seed), max_batch_(max_batch) {
  if (dim == 0) throw Error(ErrorCode::InvalidConfig, "embedding dim must be positive");
  if (max_batch == 0) throw Error(ErrorCode::InvalidConfig, "embedding max_batch must be positive");
}

EmbeddingVector DeterministicEmbedder::embed(std::string_view text) const {
  if (is_blank(text)) throw Error(ErrorCode::InvalidArgument, "cannot embed empty text");
  auto words = embedding_words(text);
  if (words.empty()) words.emplace_back(trim(text));

  const std::string seed_text = std::to_string(seed_);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_));
  for (const auto& word : words) {
    SplitMix64 rng(seed_from_hex(digest_parts({seed_text, word})));
    for (Eigen::Index i = 0; i < acc.size(); ++i) acc(i) += rng.symmetric_unit();
  }
  return normalized(acc).cast<float>();
}

std::vector<EmbeddingVector> DeterministicEmbedder::embed_batch(std::span<const std::string> texts) {
  if (texts.size() > max_batch_) throw Error(ErrorCode::InvalidArgument, "batch exceeds max_batch");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

RemoteEmbedder::RemoteEmbedder(EmbeddingConfig cfg, Sleeper sleeper) : cfg_(std::move(cfg)), sleeper_(std::move(sleeper)) {
  if (const char* env = std::getenv("MCQFORGE_EMBED_URL"); env && *env) cfg_.url = env;
  if (cfg_.url.empty()) throw Error(ErrorCode::EmbeddingBackendUnavailable, "no embedding URL configured (MCQFORGE_EMBED_URL)");
  if (cfg_.dim == 0 || cfg_.max_batch == 0) throw Error(ErrorCode::InvalidConfig, "embedding dim and max_batch must be positive");
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(std::span<const std::string> texts) {
  if (texts.size() > cfg_.max_batch) throw Error(ErrorCode::InvalidArgument, "batch exceeds max_batch");
  if (texts.empty()) return {};
  for (const auto& t : texts) {
    if (is_blank(t)) throw Error(ErrorCode::InvalidArgument, "cannot embed empty text");
  }
  json body{{"input", std::vector<std::string>(texts.begin(), texts.end())}};
  if (!cfg_.model.empty()) body["model"] = cfg_.model;
  const std::string payload = body.dump();

  SplitMix64 jitter(seed_from_hex(sha256_hex(payload)));
  HttpResponse resp;
  for (int attempt = 1;; ++attempt) {
    std::string failure;
    try {
      resp = http_post_json(cfg_.url, payload, {}, cfg_.timeout);
      if (resp.status == 200) break;
      failure = "HTTP " + std::to_string(resp.status);
      if (resp.status != 429 && resp.status < 500) {
        throw Error(ErrorCode::EmbeddingBackendUnavailable, "embedding request rejected: " + failure + " " + resp.body);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Transient) throw;
      failure = e.what();
    }
    if (attempt >= cfg_.retry.max_attempts) {
      throw Error(ErrorCode::EmbeddingBackendUnavailable, "embedding backend failed after retries: " + failure);
    }
    sleeper_(backoff_delay(cfg_.retry, attempt, jitter));
  }

  json reply = json::parse(resp.body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("data") || !reply["data"].is_array() || reply["data"].size() != texts.size()) {
    throw Error(ErrorCode::EmbeddingBackendUnavailable, "malformed embedding response");
  }
  // Some servers return items out of order with an explicit "index".
  std::vector<EmbeddingVector> out(texts.size());
  for (std::size_t i = 0; i < reply["data"].size(); ++i) {
    const auto& item = reply["data"][i];
    const std::size_t slot = item.contains("index") ? item["index"].get<std::size_t>() : i;
    const auto values = item.at("embedding").get<std::vector<float>>();
    if (values.size() != cfg_.dim) {
      throw Error(ErrorCode::DimMismatch,
                  "backend returned dim " + std::to_string(values.size()) + ", expected " + std::to_string(cfg_.dim));
    }
    if (slot >= out.size()) throw Error(ErrorCode::EmbeddingBackendUnavailable, "embedding index out of range");
    out[slot] = Eigen::Map<const EmbeddingVector>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  return out;
}

std::unique_ptr<Embedder> make_embedder(const EmbeddingConfig& cfg) {
  if (cfg.backend == EmbeddingBackend::deterministic_test) {
    return std::make_unique<DeterministicEmbedder>(cfg.dim, cfg.seed, cfg.max_batch);
  }
  return std::make_unique<RemoteEmbedder>(cfg);
}

std::vector<EmbeddingVector> embed_all(Embedder& embedder, std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t start = 0; start < texts.size(); start += embedder.max_batch()) {
    const std::size_t n = std::min(embedder.max_batch(), texts.size() - start);
    auto batch = embedder.embed_batch(texts.subspan(start, n));
    if (batch.size() != n) throw Error(ErrorCode::EmbeddingBackendUnavailable, "backend returned wrong batch length");
    for (auto& v : batch) {
      if (static_cast<std::size_t>(v.size()) != embedder.dim()) throw Error(ErrorCode::DimMismatch, "vector dim changed mid-run");
      out.push_back(std::move(v));
    }
  }
  return out;
}

}  // namespace mcqforge
