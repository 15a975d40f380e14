#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mcqforge {

/// Every failure the library raises carries one of these codes so callers
/// (and the CLI exit-code mapping) can branch without string matching.
enum class ErrorCode {
  // corpus_ingest
  MissingRoot,
  MalformedRecord,
  EmptyDocument,
  // chunker / embedding
  InvalidConfig,
  EmbeddingBackendUnavailable,
  DimMismatch,
  ZeroVector,
  Overflow,
  // vector_store
  DuplicateRef,
  KindMismatch,
  EmptyIndex,
  BadMagic,
  VersionUnsupported,
  TruncatedPayload,
  MetaRowMismatch,
  // llm_gateway
  Transient,
  Permanent,
  MockMiss,
  DuplicateRequestId,
  // mcq_factory / trace_factory
  ParseFailure,
  OptionCountMismatch,
  AnswerNotInOptions,
  SelfContainmentViolation,
  ScoreParseFailure,
  LeakUnremovable,
  // eval_harness
  QuestionExceedsBudget,
  ClassifierParseFailure,
  EmptySubset,
  ZeroBaseline,
  // pipeline_cli
  MissingUpstream,
  ConfigInvalid,
  StageFailed,
  CorruptManifest,
  Io,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mcqforge
