#include "mcqforge/errors.hpp"

namespace mcqforge {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingRoot: return "MissingRoot";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::EmbeddingBackendUnavailable: return "EmbeddingBackendUnavailable";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::DuplicateRef: return "DuplicateRef";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::MetaRowMismatch: return "MetaRowMismatch";
    case ErrorCode::Transient: return "Transient";
    case ErrorCode::Permanent: return "Permanent";
    case ErrorCode::MockMiss: return "MockMiss";
    case ErrorCode::DuplicateRequestId: return "DuplicateRequestId";
    case ErrorCode::ParseFailure: return "ParseFailure";
    case ErrorCode::OptionCountMismatch: return "OptionCountMismatch";
    case ErrorCode::AnswerNotInOptions: return "AnswerNotInOptions";
    case ErrorCode::SelfContainmentViolation: return "SelfContainmentViolation";
    case ErrorCode::ScoreParseFailure: return "ScoreParseFailure";
    case ErrorCode::LeakUnremovable: return "LeakUnremovable";
    case ErrorCode::QuestionExceedsBudget: return "QuestionExceedsBudget";
    case ErrorCode::ClassifierParseFailure: return "ClassifierParseFailure";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::MissingUpstream: return "MissingUpstream";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::StageFailed: return "StageFailed";
    case ErrorCode::CorruptManifest: return "CorruptManifest";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace mcqforge
