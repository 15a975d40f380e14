#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcqforge/chunker.hpp"
#include "mcqforge/llm_gateway.hpp"

namespace mcqforge {

inline constexpr std::size_t kOptionCount = 7;
inline constexpr int kDefaultScoreThreshold = 7;

/// 'A' + index; index < 26.
char option_letter(std::size_t index);
/// Index of an upper-case option letter, if it is one of the first `count`.
std::optional<std::size_t> letter_index(char letter, std::size_t count = kOptionCount);

/// "A) first\nB) second\n..." without a trailing newline.
std::string format_options(const std::vector<std::string>& options);

struct Provenance {
  std::string chunk_id;
  std::string file_path;

  bool operator==(const Provenance&) const = default;
};

struct RelevanceCheck {
  bool passed = false;
  std::string reasoning;

  bool operator==(const RelevanceCheck&) const = default;
};

struct Quality {
  int score = 0;
  std::string reasoning;

  bool operator==(const Quality&) const = default;
};

struct MCQRecord {
  std::string question_id;  // digest(chunk_id, question)
  std::string question;
  std::vector<std::string> options;  // A..G
  char answer = 'A';
  std::string source_text;
  std::string qtype = "multiple-choice";
  Provenance provenance;
  std::optional<RelevanceCheck> relevance_check;  // set by scoring
  std::optional<Quality> quality;                 // set by scoring

  const std::string& correct_option() const { return options.at(static_cast<std::size_t>(answer - 'A')); }
  bool operator==(const MCQRecord&) const = default;
};

json to_json(const MCQRecord& mcq);
MCQRecord mcq_from_json(const json& j);

struct GenerationConfig {
  std::string model = "gpt-4.1";
  double temperature = 0.7;
  std::int64_t max_tokens = 2048;
};

struct ScoringConfig {
  std::string model = "gpt-4.1";
  double temperature = 0.0;
  std::int64_t max_tokens = 1024;
};

/// Stage-1 request: summarize, expand, then write one 7-option question.
ChatRequest build_generation_request(const Chunk& chunk, const GenerationConfig& cfg);

/// Parses a stage-1 reply into a candidate with provenance and shuffled
/// options. Throws Error(ParseFailure | OptionCountMismatch |
/// AnswerNotInOptions | SelfContainmentViolation).
MCQRecord parse_generated_mcq(std::string_view reply, const Chunk& chunk, const std::string& file_path);

MCQRecord generate_mcq(const Chunk& chunk, const std::string& file_path, LlmGateway& gateway, const GenerationConfig& cfg);

/// Permutes options with a seed derived from question_id and remaps the
/// answer letter. Deterministic.
void shuffle_options(MCQRecord& mcq);

struct ScoreResult {
  Quality quality;
  RelevanceCheck relevance;
};

ChatRequest build_score_request(const MCQRecord& candidate, const ScoringConfig& cfg);

/// Throws Error(ScoreParseFailure) unless the reply holds an integer score in [1, 10].
ScoreResult parse_score(std::string_view reply);

ScoreResult score_mcq(const MCQRecord& candidate, LlmGateway& gateway, const ScoringConfig& cfg);

/// Banned source-reference phrases found in the question (empty = passes).
std::vector<std::string> validate_self_containment(std::string_view question);

struct FilterResult {
  std::vector<MCQRecord> accepted;
  std::vector<MCQRecord> rejected;
};

/// Keeps candidates with quality.score >= threshold, order preserved.
/// Throws Error(InvalidArgument) if a candidate is unscored.
FilterResult filter_mcqs(const std::vector<MCQRecord>& candidates, int threshold = kDefaultScoreThreshold);

}  // namespace mcqforge
