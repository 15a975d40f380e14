#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcqforge/mcq_factory.hpp"
#include "mcqforge/vector_store.hpp"

namespace mcqforge {

enum class TraceMode { detailed, focused, efficient };

inline constexpr std::array<TraceMode, 3> kTraceModes = {TraceMode::detailed, TraceMode::focused, TraceMode::efficient};

std::string_view to_string(TraceMode mode) noexcept;
TraceMode trace_mode_from_string(std::string_view s);
EntryKind entry_kind_for(TraceMode mode) noexcept;

/// A teacher rationale for one question in one mode. Deliberately has no
/// answer field.
struct ReasoningTrace {
  std::string trace_id;  // digest(question_id, mode)
  std::string question_id;
  TraceMode mode = TraceMode::detailed;
  std::string text;
  bool leak_checked = false;

  bool operator==(const ReasoningTrace&) const = default;
};

json to_json(const ReasoningTrace& trace);
ReasoningTrace trace_from_json(const json& j);

struct TraceConfig {
  std::string model = "gpt-4.1";
  double temperature = 0.7;
  std::int64_t max_tokens = 4096;
};

// ---------------------------------------------------------------- leakage

struct LeakReport {
  std::size_t declarations = 0;  // sentences declaring the correct letter
  bool verbatim_option = false;  // correct option text (>= 4 words) appears

  bool clean() const noexcept { return declarations == 0 && !verbatim_option; }
};

/// Runs both detectors against `text` for the correct answer of `mcq`.
LeakReport detect_leakage(std::string_view text, const std::vector<std::string>& options, char answer);

/// True if `sentence` declares `answer` ("the answer is C", "correct option
/// is (C)", "choose C", "Answer: C", "option C is correct").
bool declares_answer(std::string_view sentence, char answer);

enum class ScrubStatus { clean, scrubbed, unremovable };

struct ScrubResult {
  ScrubStatus status = ScrubStatus::clean;
  std::string text;  // unchanged when clean; empty when unremovable
  std::vector<std::string> removed_sentences;
  std::string reason;  // set when unremovable
};

/// Removes answer-declaring sentences. Unremovable when nothing would remain,
/// when the correct option's text (>= 4 words) is quoted, or when the result
/// still trips a detector.
ScrubResult scrub_answer_leakage(std::string_view trace_text, const std::vector<std::string>& options, char answer);
inline ScrubResult scrub_answer_leakage(std::string_view trace_text, const MCQRecord& mcq) {
  return scrub_answer_leakage(trace_text, mcq.options, mcq.answer);
}

// ---------------------------------------------------------------- generation

/// Teacher sees the question and options only, never the source chunk.
ChatRequest build_trace_request(const MCQRecord& mcq, const TraceConfig& cfg);

/// Follow-up after an unusable reply: original conversation, the reply, and
/// a repair instruction.
ChatRequest build_trace_repair_request(const ChatRequest& original, const std::string& bad_reply);

/// Throws Error(ParseFailure) unless all three modes are non-empty strings.
std::map<TraceMode, std::string> parse_trace_reply(std::string_view reply);

struct TraceRejection {
  std::string question_id;
  std::optional<TraceMode> mode;  // unset for whole-question failures
  ErrorCode code = ErrorCode::ParseFailure;
  std::string detail;
};

json to_json(const TraceRejection& r);

struct TraceOutcome {
  std::vector<ReasoningTrace> traces;  // stored traces, leak_checked
  std::vector<TraceRejection> rejections;
};

/// Turns a parsed reply into scrubbed traces; leaky modes become rejections.
TraceOutcome traces_from_reply(const MCQRecord& mcq, const std::map<TraceMode, std::string>& modes);

/// One teacher call for all three modes, one repair re-prompt on a parse
/// failure, then quarantine.
TraceOutcome generate_traces(const MCQRecord& mcq, LlmGateway& gateway, const TraceConfig& cfg);

/// Batched form of generate_traces, one outcome per input in order.
std::vector<TraceOutcome> generate_traces_batch(const std::vector<MCQRecord>& mcqs, LlmGateway& gateway,
                                                const TraceConfig& cfg, std::size_t max_in_flight);

// ---------------------------------------------------------------- indexes

/// One store per mode (detailed, focused, efficient), ref_id = trace_id.
/// Throws Error(InvalidArgument) for traces that were not leak-checked.
std::array<VectorStore, 3> build_trace_indexes(const std::vector<ReasoningTrace>& traces, Embedder& embedder,
                                               DType dtype = DType::fp16);

/// `<dir>/traces_<mode>.mcqv`
std::filesystem::path trace_index_path(const std::filesystem::path& dir, TraceMode mode);

}  // namespace mcqforge
