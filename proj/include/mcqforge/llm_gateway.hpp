#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mcqforge/errors.hpp"
#include "mcqforge/json_io.hpp"
#include "mcqforge/retry.hpp"

namespace mcqforge {

struct ChatMessage {
  std::string role;  // system | user | assistant
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::int64_t max_tokens = 512;
  std::string request_id;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason r) noexcept;

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string request_id;
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  std::int64_t latency_ms = 0;
  int attempts = 0;
  std::string error;  // set when finish_reason == error

  bool ok() const noexcept { return finish_reason != FinishReason::error; }
};

/// Throws Error(InvalidArgument) unless the request has a model, a request
/// id, at least one user message, known roles, temperature >= 0 and
/// max_tokens > 0.
void validate_request(const ChatRequest& req);

/// sha256 of the canonical JSON {"model","messages"}; the key of the
/// scripted mock and of journal replay.
std::string request_digest(std::string_view model, const std::vector<ChatMessage>& messages);
inline std::string request_digest(const ChatRequest& req) { return request_digest(req.model, req.messages); }

struct BackendReply {
  std::string content;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
};

/// One chat-completion round trip. Implementations throw Error(Transient)
/// for retryable failures, Error(Permanent) or Error(MockMiss) otherwise.
/// Must be safe to call from several threads at once.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply send(const ChatRequest& req) = 0;
};

struct RemoteChatConfig {
  std::string url;  // base URL; MCQFORGE_LLM_URL overrides
  std::string api_key;  // MCQFORGE_LLM_KEY overrides
  std::chrono::milliseconds timeout{120000};
};

/// OpenAI-compatible `/v1/chat/completions` over HTTP(S).
class RemoteChatBackend final : public ChatBackend {
 public:
  explicit RemoteChatBackend(RemoteChatConfig cfg);
  BackendReply send(const ChatRequest& req) override;

  const std::string& endpoint() const noexcept { return endpoint_; }

 private:
  RemoteChatConfig cfg_;
  std::string endpoint_;
};

/// Canned replies keyed by request_digest(model, messages).
class ScriptedMockBackend final : public ChatBackend {
 public:
  ScriptedMockBackend() = default;

  void add(const std::string& digest, std::string content);
  void add(std::string_view model, const std::vector<ChatMessage>& messages, std::string content);

  /// Loads a script: JSONL whose rows carry "content" plus either
  /// "request_digest"/"digest" or "model"+"messages". A `calls.jsonl`
  /// journal is a valid script; failed calls in it are skipped and the
  /// first reply per digest wins.
  static std::shared_ptr<ScriptedMockBackend> from_file(const std::filesystem::path& path);

  BackendReply send(const ChatRequest& req) override;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> replies_;
};

/// Append-only JSONL call log; one writer at a time.
class Journal {
 public:
  explicit Journal(const std::filesystem::path& path);
  void append(const json& entry);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
  std::ofstream out_;
};

struct GatewayOptions {
  RetryPolicy retry;
  Sleeper sleeper;  // defaults to std::this_thread::sleep_for
  std::shared_ptr<Journal> journal;
};

/// Retrying, journaling front door to a ChatBackend.
class LlmGateway {
 public:
  explicit LlmGateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {});

  /// Blocking call with retry. Throws Error(Permanent | Transient | MockMiss |
  /// DuplicateRequestId | InvalidArgument) once the call has definitively failed.
  ChatResponse complete(const ChatRequest& req);

  /// Responses come back in request order; failures are embedded as
  /// error-marked responses. At most `max_in_flight` calls are outstanding.
  std::vector<ChatResponse> complete_batch(std::span<const ChatRequest> reqs, std::size_t max_in_flight);

 private:
  void journal(const ChatRequest& req, const std::string& digest, const ChatResponse& resp);

  std::shared_ptr<ChatBackend> backend_;
  GatewayOptions options_;
  std::mutex ids_mu_;
  std::unordered_set<std::string> seen_ids_;
};

}  // namespace mcqforge
