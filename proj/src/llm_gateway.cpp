#include "mcqforge/llm_gateway.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>

#include "mcqforge/http.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

namespace fs = std::filesystem;

std::string_view to_string(FinishReason r) noexcept {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

namespace {

json messages_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", m.role}, {"content", m.content}});
  return arr;
}

std::vector<ChatMessage> messages_from_json(const json& arr) {
  std::vector<ChatMessage> out;
  for (const auto& m : arr) out.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  return out;
}

}  // namespace

void validate_request(const ChatRequest& req) {
  if (req.model.empty()) throw Error(ErrorCode::InvalidArgument, "request has no model");
  if (req.request_id.empty()) throw Error(ErrorCode::InvalidArgument, "request has no request_id");
  if (!(req.temperature >= 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
  if (req.max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
  bool has_user = false;
  for (const auto& m : req.messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant") {
      throw Error(ErrorCode::InvalidArgument, "unknown role: " + m.role);
    }
    has_user = has_user || m.role == "user";
  }
  if (!has_user) throw Error(ErrorCode::InvalidArgument, "request has no user message");
}

std::string request_digest(std::string_view model, const std::vector<ChatMessage>& messages) {
  return sha256_hex(json{{"model", model}, {"messages", messages_json(messages)}}.dump());
}

// ---------------------------------------------------------------- remote

RemoteChatBackend::RemoteChatBackend(RemoteChatConfig cfg) : cfg_(std::move(cfg)) {
  if (const char* url = std::getenv("MCQFORGE_LLM_URL"); url && *url) cfg_.url = url;
  if (const char* key = std::getenv("MCQFORGE_LLM_KEY"); key && *key) cfg_.api_key = key;
  if (cfg_.url.empty()) throw Error(ErrorCode::ConfigInvalid, "no LLM endpoint configured (MCQFORGE_LLM_URL)");

  std::string base = cfg_.url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  if (base.ends_with("/chat/completions")) endpoint_ = base;
  else if (base.ends_with("/v1")) endpoint_ = base + "/chat/completions";
  else endpoint_ = join_url(base, "v1/chat/completions");
}

BackendReply RemoteChatBackend::send(const ChatRequest& req) {
  json body{{"model", req.model},
            {"messages", messages_json(req.messages)},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
  HttpHeaders headers;
  if (!cfg_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + cfg_.api_key);

  const HttpResponse resp = http_post_json(endpoint_, body.dump(), headers, cfg_.timeout);
  if (resp.status == 429 || resp.status == 408 || resp.status >= 500) {
    throw Error(ErrorCode::Transient, "HTTP " + std::to_string(resp.status));
  }
  if (resp.status != 200) {
    throw Error(ErrorCode::Permanent, "HTTP " + std::to_string(resp.status) + ": " + resp.body.substr(0, 512));
  }

  json reply = json::parse(resp.body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("choices") || reply["choices"].empty()) {
    throw Error(ErrorCode::Permanent, "malformed chat completion body");
  }
  const auto& choice = reply["choices"][0];
  BackendReply out;
  const auto& content = choice.at("message").value("content", json(nullptr));
  out.content = content.is_string() ? content.get<std::string>() : "";
  const std::string finish = choice.value("finish_reason", json("stop")).is_string()
                                 ? choice.value("finish_reason", std::string("stop"))
                                 : std::string("stop");
  out.finish_reason = finish == "length" ? FinishReason::length : FinishReason::stop;
  if (reply.contains("usage") && reply["usage"].is_object()) {
    out.usage.prompt_tokens = reply["usage"].value("prompt_tokens", std::int64_t{0});
    out.usage.completion_tokens = reply["usage"].value("completion_tokens", std::int64_t{0});
  }
  return out;
}

// ---------------------------------------------------------------- scripted mock

void ScriptedMockBackend::add(const std::string& digest, std::string content) {
  std::lock_guard lock(mu_);
  replies_.try_emplace(digest, std::move(content));
}

void ScriptedMockBackend::add(std::string_view model, const std::vector<ChatMessage>& messages, std::string content) {
  add(request_digest(model, messages), std::move(content));
}

std::shared_ptr<ScriptedMockBackend> ScriptedMockBackend::from_file(const fs::path& path) {
  auto mock = std::make_shared<ScriptedMockBackend>();
  for (const auto& row : read_jsonl_strict(path)) {
    if (row.contains("status") && row["status"] != "ok") continue;
    if (!row.contains("content") || !row["content"].is_string()) {
      throw Error(ErrorCode::ParseFailure, path.string() + ": script row without string content");
    }
    std::string content = row["content"].get<std::string>();
    if (row.contains("request_digest")) mock->add(row["request_digest"].get<std::string>(), std::move(content));
    else if (row.contains("digest")) mock->add(row["digest"].get<std::string>(), std::move(content));
    else if (row.contains("model") && row.contains("messages")) {
      mock->add(row["model"].get<std::string>(), messages_from_json(row["messages"]), std::move(content));
    } else {
      throw Error(ErrorCode::ParseFailure, path.string() + ": script row has no key");
    }
  }
  return mock;
}

BackendReply ScriptedMockBackend::send(const ChatRequest& req) {
  const std::string digest = request_digest(req);
  std::lock_guard lock(mu_);
  auto it = replies_.find(digest);
  if (it == replies_.end()) throw Error(ErrorCode::MockMiss, "no scripted reply for " + req.request_id + " (" + digest + ")");
  std::int64_t prompt_tokens = 0;
  for (const auto& m : req.messages) prompt_tokens += estimate_tokens(m.content);
  return {it->second, FinishReason::stop, {prompt_tokens, estimate_tokens(it->second)}};
}

std::size_t ScriptedMockBackend::size() const {
  std::lock_guard lock(mu_);
  return replies_.size();
}

// ---------------------------------------------------------------- journal

Journal::Journal(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorCode::Io, "cannot open journal " + path.string());
}

void Journal::append(const json& entry) {
  const std::string line = entry.dump() + "\n";
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
}

// ---------------------------------------------------------------- gateway

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
  if (!backend_) throw Error(ErrorCode::InvalidArgument, "gateway needs a backend");
  if (!options_.sleeper) options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (options_.retry.max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "max_attempts must be >= 1");
}

void LlmGateway::journal(const ChatRequest& req, const std::string& digest, const ChatResponse& resp) {
  if (!options_.journal) return;
  options_.journal->append({{"request_id", req.request_id},
                            {"request_digest", digest},
                            {"model", req.model},
                            {"messages", messages_json(req.messages)},
                            {"temperature", req.temperature},
                            {"max_tokens", req.max_tokens},
                            {"status", resp.ok() ? "ok" : "error"},
                            {"content", resp.content},
                            {"finish_reason", to_string(resp.finish_reason)},
                            {"usage", {{"prompt_tokens", resp.usage.prompt_tokens}, {"completion_tokens", resp.usage.completion_tokens}}},
                            {"response_digest", sha256_hex(resp.content)},
                            {"attempts", resp.attempts},
                            {"latency_ms", resp.latency_ms},
                            {"error", resp.error}});
}

ChatResponse LlmGateway::complete(const ChatRequest& req) {
  validate_request(req);
  {
    std::lock_guard lock(ids_mu_);
    if (!seen_ids_.insert(req.request_id).second) throw Error(ErrorCode::DuplicateRequestId, req.request_id);
  }

  const std::string digest = request_digest(req);
  SplitMix64 jitter(seed_from_hex(digest_parts({digest, req.request_id})));
  const auto started = std::chrono::steady_clock::now();
  ChatResponse resp;
  resp.request_id = req.request_id;

  auto elapsed = [&] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
  };

  for (int attempt = 1;; ++attempt) {
    resp.attempts = attempt;
    try {
      BackendReply reply = backend_->send(req);
      resp.content = std::move(reply.content);
      resp.finish_reason = reply.finish_reason;
      resp.usage = reply.usage;
      resp.latency_ms = elapsed();
      journal(req, digest, resp);
      return resp;
    } catch (const Error& e) {
      const bool retryable = e.code() == ErrorCode::Transient;
      if (!retryable || attempt >= options_.retry.max_attempts) {
        resp.finish_reason = FinishReason::error;
        resp.error = e.what();
        resp.latency_ms = elapsed();
        journal(req, digest, resp);
        throw Error(e.code(), req.request_id + " failed after " + std::to_string(attempt) + " attempt(s): " + e.what());
      }
    }
    options_.sleeper(backoff_delay(options_.retry, attempt, jitter));
  }
}

std::vector<ChatResponse> LlmGateway::complete_batch(std::span<const ChatRequest> reqs, std::size_t max_in_flight) {
  if (max_in_flight == 0) throw Error(ErrorCode::InvalidArgument, "max_in_flight must be >= 1");
  std::vector<ChatResponse> out(reqs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < reqs.size(); i = next++) {
      try {
        out[i] = complete(reqs[i]);
      } catch (const std::exception& e) {
        out[i].request_id = reqs[i].request_id;
        out[i].finish_reason = FinishReason::error;
        out[i].error = e.what();
      }
    }
  };
  const std::size_t width = std::min(max_in_flight, reqs.size());
  if (width <= 1) {
    worker();
    return out;
  }
  std::vector<std::jthread> pool;
  pool.reserve(width);
  for (std::size_t t = 0; t < width; ++t) pool.emplace_back(worker);
  pool.clear();  // joins
  return out;
}

}  // namespace mcqforge
