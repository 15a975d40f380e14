#include "mcqforge/trace_factory.hpp"

#include <cctype>
#include <regex>

#include "mcqforge/prompts.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

namespace fs = std::filesystem;

std::string_view to_string(TraceMode mode) noexcept {
  switch (mode) {
    case TraceMode::detailed: return "detailed";
    case TraceMode::focused: return "focused";
    case TraceMode::efficient: return "efficient";
  }
  return "detailed";
}

TraceMode trace_mode_from_string(std::string_view s) {
  if (s == "detailed") return TraceMode::detailed;
  if (s == "focused") return TraceMode::focused;
  if (s == "efficient") return TraceMode::efficient;
  throw Error(ErrorCode::InvalidArgument, "unknown trace mode: " + std::string(s));
}

EntryKind entry_kind_for(TraceMode mode) noexcept {
  switch (mode) {
    case TraceMode::detailed: return EntryKind::trace_detailed;
    case TraceMode::focused: return EntryKind::trace_focused;
    case TraceMode::efficient: return EntryKind::trace_efficient;
  }
  return EntryKind::trace_detailed;
}

json to_json(const ReasoningTrace& t) {
  return json{{"trace_id", t.trace_id},
              {"question_id", t.question_id},
              {"mode", to_string(t.mode)},
              {"text", t.text},
              {"leak_checked", t.leak_checked}};
}

ReasoningTrace trace_from_json(const json& j) {
  return {j.at("trace_id").get<std::string>(), j.at("question_id").get<std::string>(),
          trace_mode_from_string(j.at("mode").get<std::string>()), j.at("text").get<std::string>(),
          j.at("leak_checked").get<bool>()};
}

json to_json(const TraceRejection& r) {
  return json{{"question_id", r.question_id},
              {"mode", r.mode ? json(to_string(*r.mode)) : json(nullptr)},
              {"reason", to_string(r.code)},
              {"detail", r.detail}};
}

// ---------------------------------------------------------------- leakage

namespace {

// Group 1: opening paren, group 2: the letter, group 3: closing paren.
const std::vector<std::regex>& declaration_patterns() {
  static const std::vector<std::regex> patterns = [] {
    const auto flags = std::regex::ECMAScript | std::regex::icase;
    const std::string letter = R"((\(?)([a-g])(\)?))";
    return std::vector<std::regex>{
        std::regex(R"(\banswers?\s+(?:is|would\s+be|must\s+be|should\s+be|will\s+be)\s*:?\s*(?:option\s+|choice\s+|letter\s+)?)" + letter, flags),
        std::regex(R"(\b(?:correct|right|best)\s+(?:option|choice|answer|letter)\s+(?:is|would\s+be|must\s+be|should\s+be)\s*:?\s*(?:option\s+|choice\s+)?)" + letter, flags),
        std::regex(R"(\b(?:choose|select|pick)\s+(?:option\s+|choice\s+)?)" + letter, flags),
        std::regex(R"(\banswer\s*:\s*(?:option\s+)?)" + letter, flags),
        std::regex(R"(\b(?:option|choice)\s+)" + letter + R"(\s+is\s+(?:the\s+)?(?:correct|right|best))", flags),
    };
  }();
  return patterns;
}

bool letter_terminates(std::string_view text, std::size_t pos) {
  if (pos >= text.size()) return true;
  const char c = text[pos];
  return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == ')' || c == '"' || c == '\'' ||
         c == '\n';
}

// Rebuilds text from kept sentences, keeping the original whitespace that
// preceded each kept sentence (none before the first).
std::string join_kept(std::string_view text, const std::vector<Sentence>& sentences, const std::vector<bool>& keep) {
  std::string out;
  std::size_t prev_end = 0;
  bool any = false;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (keep[i]) {
      if (any) out.append(text.substr(prev_end, sentences[i].begin - prev_end));
      out.append(text.substr(sentences[i].begin, sentences[i].end - sentences[i].begin));
      any = true;
    }
    prev_end = sentences[i].end;
  }
  return out;
}

bool quotes_option(std::string_view text, const std::string& option) {
  if (split_words(option).size() < 4) return false;
  return fold_whitespace_lower(text).find(fold_whitespace_lower(option)) != std::string::npos;
}

}  // namespace

bool declares_answer(std::string_view sentence, char answer) {
  const std::string s(sentence);
  for (const auto& re : declaration_patterns()) {
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
      const auto& m = *it;
      const char c = m.str(2)[0];
      if (std::toupper(static_cast<unsigned char>(c)) != answer) continue;
      if (std::isupper(static_cast<unsigned char>(c))) return true;
      // Lower-case letters are usually the article "a" or prose; accept only
      // when fenced by parentheses or punctuation.
      const bool parenthesized = !m.str(1).empty() || !m.str(3).empty();
      if (parenthesized || letter_terminates(s, static_cast<std::size_t>(m.position(0) + m.length(0)))) return true;
    }
  }
  return false;
}

LeakReport detect_leakage(std::string_view text, const std::vector<std::string>& options, char answer) {
  LeakReport report;
  for (const auto& s : segment_sentences(text)) {
    if (declares_answer(s.text, answer)) ++report.declarations;
  }
  const auto idx = letter_index(answer, options.size());
  report.verbatim_option = idx && quotes_option(text, options[*idx]);
  return report;
}

ScrubResult scrub_answer_leakage(std::string_view trace_text, const std::vector<std::string>& options, char answer) {
  ScrubResult out;
  const auto sentences = segment_sentences(trace_text);
  std::vector<bool> keep(sentences.size(), true);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (declares_answer(sentences[i].text, answer)) {
      keep[i] = false;
      out.removed_sentences.push_back(sentences[i].text);
    }
  }

  auto unremovable = [&](std::string reason) {
    out.status = ScrubStatus::unremovable;
    out.text.clear();
    out.reason = std::move(reason);
    return out;
  };

  std::string candidate = out.removed_sentences.empty() ? std::string(trace_text) : join_kept(trace_text, sentences, keep);
  if (is_blank(candidate)) return unremovable("nothing left after removing answer declarations");
  const LeakReport residual = detect_leakage(candidate, options, answer);
  if (residual.verbatim_option) return unremovable("trace quotes the correct option verbatim");
  if (residual.declarations > 0) return unremovable("answer declaration survives sentence removal");

  out.status = out.removed_sentences.empty() ? ScrubStatus::clean : ScrubStatus::scrubbed;
  out.text = std::move(candidate);
  return out;
}

// ---------------------------------------------------------------- generation

ChatRequest build_trace_request(const MCQRecord& mcq, const TraceConfig& cfg) {
  const auto& t = prompt_template("trace_generate");
  const std::string options = format_options(mcq.options);
  ChatRequest req;
  req.model = cfg.model;
  req.messages.push_back({"system", t.system});
  req.messages.push_back({"user", render_template(t.user, {{"question", mcq.question}, {"options", options}})});
  req.temperature = cfg.temperature;
  req.max_tokens = cfg.max_tokens;
  req.request_id = "traces:" + mcq.question_id;
  return req;
}

ChatRequest build_trace_repair_request(const ChatRequest& original, const std::string& bad_reply) {
  ChatRequest req = original;
  req.messages.push_back({"assistant", bad_reply});
  req.messages.push_back({"user", prompt_template("trace_repair").user});
  req.request_id = original.request_id + ":repair";
  return req;
}

std::map<TraceMode, std::string> parse_trace_reply(std::string_view reply) {
  auto obj = extract_json_object(reply);
  if (!obj) throw Error(ErrorCode::ParseFailure, "no JSON object in trace reply");
  std::map<TraceMode, std::string> modes;
  for (auto mode : kTraceModes) {
    const std::string key(to_string(mode));
    if (!obj->contains(key) || !(*obj)[key].is_string() || is_blank((*obj)[key].get<std::string>())) {
      throw Error(ErrorCode::ParseFailure, "trace reply lacks mode '" + key + "'");
    }
    modes.emplace(mode, std::string(trim((*obj)[key].get<std::string>())));
  }
  return modes;
}

TraceOutcome traces_from_reply(const MCQRecord& mcq, const std::map<TraceMode, std::string>& modes) {
  TraceOutcome out;
  for (const auto& [mode, text] : modes) {
    ScrubResult scrubbed = scrub_answer_leakage(text, mcq);
    if (scrubbed.status == ScrubStatus::unremovable) {
      out.rejections.push_back({mcq.question_id, mode, ErrorCode::LeakUnremovable, scrubbed.reason});
      continue;
    }
    out.traces.push_back({digest_parts({mcq.question_id, to_string(mode)}), mcq.question_id, mode, std::move(scrubbed.text), true});
  }
  return out;
}

namespace {

std::optional<std::map<TraceMode, std::string>> try_parse(const ChatResponse& resp, std::string& why) {
  if (!resp.ok()) {
    why = resp.error;
    return std::nullopt;
  }
  try {
    return parse_trace_reply(resp.content);
  } catch (const Error& e) {
    why = e.what();
    return std::nullopt;
  }
}

}  // namespace

std::vector<TraceOutcome> generate_traces_batch(const std::vector<MCQRecord>& mcqs, LlmGateway& gateway,
                                                const TraceConfig& cfg, std::size_t max_in_flight) {
  std::vector<ChatRequest> first;
  first.reserve(mcqs.size());
  for (const auto& m : mcqs) first.push_back(build_trace_request(m, cfg));
  const auto replies = gateway.complete_batch(first, max_in_flight);

  std::vector<TraceOutcome> outcomes(mcqs.size());
  std::vector<std::size_t> retry_slots;
  std::vector<ChatRequest> retries;
  for (std::size_t i = 0; i < mcqs.size(); ++i) {
    std::string why;
    if (auto modes = try_parse(replies[i], why)) {
      outcomes[i] = traces_from_reply(mcqs[i], *modes);
    } else if (replies[i].ok()) {
      retry_slots.push_back(i);
      retries.push_back(build_trace_repair_request(first[i], replies[i].content));
    } else {
      outcomes[i].rejections.push_back({mcqs[i].question_id, std::nullopt, ErrorCode::ParseFailure, why});
    }
  }

  const auto repaired = gateway.complete_batch(retries, max_in_flight);
  for (std::size_t r = 0; r < retry_slots.size(); ++r) {
    const std::size_t i = retry_slots[r];
    std::string why;
    if (auto modes = try_parse(repaired[r], why)) {
      outcomes[i] = traces_from_reply(mcqs[i], *modes);
    } else {
      outcomes[i].rejections.push_back({mcqs[i].question_id, std::nullopt, ErrorCode::ParseFailure, "after re-prompt: " + why});
    }
  }
  return outcomes;
}

TraceOutcome generate_traces(const MCQRecord& mcq, LlmGateway& gateway, const TraceConfig& cfg) {
  return generate_traces_batch({mcq}, gateway, cfg, 1).front();
}

// ---------------------------------------------------------------- indexes

std::array<VectorStore, 3> build_trace_indexes(const std::vector<ReasoningTrace>& traces, Embedder& embedder, DType dtype) {
  std::array<VectorStore, 3> stores = {VectorStore(embedder.dim(), dtype, EntryKind::trace_detailed),
                                       VectorStore(embedder.dim(), dtype, EntryKind::trace_focused),
                                       VectorStore(embedder.dim(), dtype, EntryKind::trace_efficient)};
  std::vector<std::string> texts;
  texts.reserve(traces.size());
  for (const auto& t : traces) {
    if (!t.leak_checked) throw Error(ErrorCode::InvalidArgument, "trace " + t.trace_id + " was not leak-checked");
    texts.push_back(t.text);
  }
  const auto vectors = embed_all(embedder, texts);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    stores[static_cast<std::size_t>(traces[i].mode)].add(vectors[i], traces[i].trace_id, entry_kind_for(traces[i].mode));
  }
  return stores;
}

fs::path trace_index_path(const fs::path& dir, TraceMode mode) {
  return dir / ("traces_" + std::string(to_string(mode)) + ".mcqv");
}

}  // namespace mcqforge
