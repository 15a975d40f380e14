#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcqforge/errors.hpp"
#include "mcqforge/json_io.hpp"

namespace mcqforge {

enum class DocumentKind { full_paper, abstract };

std::string_view to_string(DocumentKind kind) noexcept;
DocumentKind document_kind_from_string(std::string_view s);

/// One source paper or abstract, already parsed to text.
struct ParsedDocument {
  std::string doc_id;  // sha256 of the normalized text
  std::string source_path;
  std::optional<std::string> title;
  std::string text;  // NFC, LF newlines
  DocumentKind kind = DocumentKind::full_paper;
  std::map<std::string, std::string> metadata;

  bool operator==(const ParsedDocument&) const = default;
};

json to_json(const ParsedDocument& doc);
ParsedDocument document_from_json(const json& j);

enum class CorpusFormat { jsonl, json_dir, text_dir, markdown_dir };

CorpusFormat corpus_format_from_string(std::string_view s);

struct IngestIssue {
  ErrorCode code;  // MalformedRecord or EmptyDocument
  std::string path;
  std::size_t line = 0;  // 0 when the record is a whole file
  std::string detail;
};

struct CorpusLoadResult {
  std::vector<ParsedDocument> documents;  // sorted by source_path
  std::vector<IngestIssue> issues;
  std::size_t records_encountered = 0;
  std::size_t malformed_skipped = 0;
  std::size_t empty_skipped = 0;

  std::size_t count(DocumentKind kind) const;
};

/// Content digest of a document body. Throws Error(EmptyDocument) when the
/// text is blank.
std::string assign_doc_id(std::string_view text);

/// Loads a parsed corpus. `root` is a directory (or, for jsonl, a single
/// file); files are visited in lexicographic order. Throws Error(MissingRoot)
/// if `root` does not exist; bad records are reported in `issues`.
CorpusLoadResult load_corpus(const std::filesystem::path& root, CorpusFormat format);

}  // namespace mcqforge
