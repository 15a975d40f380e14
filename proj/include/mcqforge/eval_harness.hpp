#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "mcqforge/mcq_factory.hpp"
#include "mcqforge/trace_factory.hpp"

namespace mcqforge {

// ---------------------------------------------------------------- conditions

enum class ConditionTag { baseline, rag_chunks, rag_traces };

std::string_view to_string(ConditionTag tag) noexcept;

struct EvalCondition {
  ConditionTag tag = ConditionTag::baseline;
  std::optional<TraceMode> trace_mode;  // required iff tag == rag_traces
  std::size_t k = 0;                    // retrieval depth; 0 for baseline

  /// "baseline", "rag_chunks", "rag_traces_<mode>"
  std::string label() const;
  /// Throws Error(InvalidArgument) when the fields contradict the tag.
  void validate() const;

  static EvalCondition baseline() { return {}; }
  static EvalCondition chunks(std::size_t k) { return {ConditionTag::rag_chunks, std::nullopt, k}; }
  static EvalCondition traces(TraceMode mode, std::size_t k) { return {ConditionTag::rag_traces, mode, k}; }
};

EvalCondition condition_from_label(std::string_view label, std::size_t k);

// ---------------------------------------------------------------- items

/// One question as the harness sees it: generated MCQs and external exams
/// alike (2 to 7 options).
struct EvalItem {
  std::string question_id;
  std::string question;
  std::vector<std::string> options;
  char answer = 'A';
  bool multimodal = false;
};

EvalItem eval_item_from(const MCQRecord& mcq);

/// Exam rows: {"question", "options" (list or A..G object), "answer",
/// optional "question_id" and "multimodal"}. Missing ids become
/// digest("exam", question). Throws Error(ParseFailure).
EvalItem eval_item_from_json(const json& j);

/// Retrieval query: stem plus lettered options.
std::string query_text(const EvalItem& item);

// ---------------------------------------------------------------- prompts

/// Context windows of the evaluated models, keyed by a case-insensitive
/// substring of the model id.
std::optional<std::int64_t> known_context_window(std::string_view model_id);

struct RetrievedText {
  std::string ref_id;
  std::string text;
  float score = 0.0f;
};

struct AssembledPrompt {
  std::vector<ChatMessage> messages;
  std::vector<std::string> included_refs;  // in rank order
  std::int64_t prompt_tokens = 0;
};

/// Fixed answer template with an optional "Context:" block. Retrieved texts
/// are taken whole, in rank order, skipping any that would push the prompt
/// past context_window - answer_headroom. Throws
/// Error(QuestionExceedsBudget) when the question alone does not fit.
AssembledPrompt assemble_prompt(const EvalItem& item, const EvalCondition& condition,
                                std::span<const RetrievedText> retrieved, std::int64_t context_window,
                                std::int64_t answer_headroom);

std::int64_t prompt_tokens(const std::vector<ChatMessage>& messages);

struct AnswerConfig {
  double temperature = 0.0;
  std::int64_t max_tokens = 64;
};

ChatRequest build_answer_request(const std::string& model_id, const AssembledPrompt& prompt, const AnswerConfig& cfg,
                                 std::string request_id);

/// Temperature-0 call; transport failures come back error-marked.
ChatResponse answer_question(const std::string& model_id, const AssembledPrompt& prompt, LlmGateway& gateway,
                             const AnswerConfig& cfg, std::string request_id);

// ---------------------------------------------------------------- grading

enum class Grader { llm_judge, deterministic };

std::string_view to_string(Grader g) noexcept;

struct GradedAnswer {
  std::string dataset;
  std::string question_id;
  std::string model_id;
  std::string condition;  // EvalCondition::label()
  std::string raw_response;
  std::optional<char> extracted_choice;  // nullopt = ABSTAIN
  bool correct = false;
  std::string judge_reasoning;
  Grader grader = Grader::deterministic;

  bool operator==(const GradedAnswer&) const = default;
};

json to_json(const GradedAnswer& g);
GradedAnswer graded_from_json(const json& j);

struct Extraction {
  std::optional<char> choice;  // set when exactly one letter was found
  bool ambiguous = false;      // several distinct letters
  std::string rule;            // which pattern decided
};

/// Deterministic extractor, tiers tried in order and the first tier that
/// yields any letter decides: "Answer: X" declarations, a leading standalone
/// letter, "(X)", then unambiguous option-text matches.
Extraction extract_choice(std::string_view response, const std::vector<std::string>& options);

struct JudgeConfig {
  std::string model;
  bool sees_gold = true;
  double temperature = 0.0;
  std::int64_t max_tokens = 512;
};

struct Judge {
  LlmGateway& gateway;
  JudgeConfig cfg;
};

ChatRequest build_judge_request(const EvalItem& item, std::string_view response, const JudgeConfig& cfg,
                                std::string request_id);

/// Parses `{"choice", "reasoning"}`; nullopt choice for ABSTAIN or anything
/// unparseable.
std::pair<std::optional<char>, std::string> parse_judge_reply(std::string_view reply, std::size_t option_count);

/// Deterministic extraction first; the judge only sees responses the
/// extractor cannot settle. Empty or failed responses are ABSTAIN without a
/// judge call. Never throws for model misbehavior.
GradedAnswer grade(const EvalItem& item, const ChatResponse& response, const std::optional<Judge>& judge,
                   std::string judge_request_id);

// ---------------------------------------------------------------- math subset

struct ClassifierConfig {
  std::string model;
  double temperature = 0.0;
  std::int64_t max_tokens = 512;
};

ChatRequest build_classifier_request(const EvalItem& item, const ClassifierConfig& cfg);

/// nullopt on ClassifierParseFailure.
std::optional<bool> parse_classifier_reply(std::string_view reply);

/// Results cached by question_id; a failed classification is cached as
/// unknown and keeps the question in the `all` subset only.
class MathClassifier {
 public:
  MathClassifier(LlmGateway& gateway, ClassifierConfig cfg) : gateway_(gateway), cfg_(std::move(cfg)) {}

  std::optional<bool> classify(const EvalItem& item);
  /// Classifies every uncached item with bounded concurrency.
  void classify_all(std::span<const EvalItem> items, std::size_t max_in_flight);

  const std::map<std::string, std::optional<bool>>& cache() const noexcept { return cache_; }
  void preload(std::string question_id, std::optional<bool> value) { cache_[std::move(question_id)] = value; }

 private:
  LlmGateway& gateway_;
  ClassifierConfig cfg_;
  std::map<std::string, std::optional<bool>> cache_;
};

// ---------------------------------------------------------------- runs

struct EvalModel {
  std::string id;
  std::int64_t context_window = 0;
};

/// A searchable store plus the texts its ref_ids resolve to.
struct RetrievalSource {
  const VectorStore* store = nullptr;
  std::unordered_map<std::string, std::string> texts;
};

struct EvalRunConfig {
  std::string dataset = "benchmark";
  std::vector<EvalCondition> conditions;
  std::int64_t answer_headroom = 64;
  AnswerConfig answer;
  std::size_t max_in_flight = 4;
};

struct EvalSources {
  const RetrievalSource* chunks = nullptr;
  std::map<TraceMode, const RetrievalSource*> traces;
  Embedder* embedder = nullptr;  // embeds query_text for retrieval
};

struct EvalOutcome {
  std::vector<GradedAnswer> graded;  // model, then condition, then item order
  std::vector<json> prompts;         // assembled prompt per graded answer
  std::size_t skipped_multimodal = 0;
};

/// Runs every model under every condition. Multimodal items are excluded.
/// Answer calls are batched per (model, condition); grading follows in
/// item order.
EvalOutcome evaluate(std::span<const EvalItem> items, const std::vector<EvalModel>& models, const EvalRunConfig& cfg,
                     const EvalSources& sources, LlmGateway& gateway, const std::optional<Judge>& judge);

// ---------------------------------------------------------------- reporting

/// Exact fraction correct over answers passing `keep`. Throws Error(EmptySubset).
double accuracy(std::span<const GradedAnswer> graded,
                const std::function<bool(const GradedAnswer&)>& keep = [](const GradedAnswer&) { return true; });

/// (new - base) / base * 100. Throws Error(ZeroBaseline) when base <= 0.
double relative_improvement(double new_accuracy, double base_accuracy);

/// Nearest integer percent, halves away from zero.
long long rounded_percent(double percent);

struct BestMode {
  TraceMode mode = TraceMode::detailed;
  double accuracy = 0.0;
};

/// Max over the trace modes present; ties go to the earlier mode
/// (detailed, focused, efficient).
std::optional<BestMode> best_of_modes(const std::map<TraceMode, double>& per_mode);

enum class Subset { all, no_math };

std::string_view to_string(Subset s) noexcept;

struct ConditionScore {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::string dataset;
  std::string model_id;
  Subset subset = Subset::all;
  std::size_t question_count = 0;
  std::map<std::string, ConditionScore> conditions;  // by condition label
  std::optional<BestMode> best_trace;
  std::optional<double> traces_vs_baseline_pct;  // best trace mode against baseline
  std::optional<double> traces_vs_chunks_pct;    // best trace mode against rag_chunks
  std::optional<double> chunks_vs_baseline_pct;
};

json to_json(const EvalReport& r);

/// Groups graded answers by (dataset, model, subset). The no_math subset is
/// emitted for datasets whose questions all carry a label in `math_labels`
/// (missing or unknown labels keep a question out of no_math).
std::vector<EvalReport> build_reports(std::span<const GradedAnswer> graded,
                                      const std::map<std::string, std::optional<bool>>& math_labels,
                                      const std::vector<std::string>& classified_datasets);

/// model x condition accuracy matrix, one row per (dataset, subset, model).
std::string report_csv(const std::vector<EvalReport>& reports);

/// Percent-improvement table for one (dataset, subset): model, best trace
/// mode, and the improvements over baseline and over chunk retrieval.
std::string improvement_csv(const std::vector<EvalReport>& reports, std::string_view dataset, Subset subset);

}  // namespace mcqforge
