#include "mcqforge/corpus.hpp"

#include <algorithm>

#include "mcqforge/errors.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

namespace fs = std::filesystem;

std::string_view to_string(DocumentKind kind) noexcept {
  return kind == DocumentKind::abstract ? "abstract" : "full_paper";
}

DocumentKind document_kind_from_string(std::string_view s) {
  if (s == "abstract") return DocumentKind::abstract;
  if (s == "full_paper") return DocumentKind::full_paper;
  throw Error(ErrorCode::InvalidArgument, "unknown document kind: " + std::string(s));
}

CorpusFormat corpus_format_from_string(std::string_view s) {
  if (s == "jsonl") return CorpusFormat::jsonl;
  if (s == "json_dir") return CorpusFormat::json_dir;
  if (s == "text_dir") return CorpusFormat::text_dir;
  if (s == "markdown_dir") return CorpusFormat::markdown_dir;
  throw Error(ErrorCode::InvalidArgument, "unknown corpus format: " + std::string(s));
}

json to_json(const ParsedDocument& doc) {
  return json{{"doc_id", doc.doc_id},
              {"source_path", doc.source_path},
              {"title", doc.title ? json(*doc.title) : json(nullptr)},
              {"text", doc.text},
              {"kind", to_string(doc.kind)},
              {"metadata", doc.metadata}};
}

ParsedDocument document_from_json(const json& j) {
  ParsedDocument doc;
  doc.doc_id = j.at("doc_id").get<std::string>();
  doc.source_path = j.at("source_path").get<std::string>();
  if (j.contains("title") && !j.at("title").is_null()) doc.title = j.at("title").get<std::string>();
  doc.text = j.at("text").get<std::string>();
  doc.kind = document_kind_from_string(j.at("kind").get<std::string>());
  doc.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
  return doc;
}

std::size_t CorpusLoadResult::count(DocumentKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(documents.begin(), documents.end(), [kind](const auto& d) { return d.kind == kind; }));
}

std::string assign_doc_id(std::string_view text) {
  if (is_blank(text)) throw Error(ErrorCode::EmptyDocument, "document text is empty");
  return sha256_hex(normalize_text(text));
}

namespace {

struct RawRecord {
  std::string source_path;
  std::string text;
  std::map<std::string, std::string> metadata;
  std::optional<std::string> title;
};

std::map<std::string, std::string> metadata_from_json(const json& j) {
  std::map<std::string, std::string> out;
  if (!j.is_object()) return out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
  }
  return out;
}

// Throws std::exception on any shape problem; callers turn that into a
// MalformedRecord issue.
RawRecord record_from_object(const json& obj, const std::string& fallback_path) {
  if (!obj.is_object()) throw std::invalid_argument("record is not a JSON object");
  RawRecord rec;
  rec.text = obj.at("text").get<std::string>();
  rec.source_path = obj.contains("path") ? obj.at("path").get<std::string>() : fallback_path;
  if (obj.contains("metadata")) rec.metadata = metadata_from_json(obj.at("metadata"));
  if (auto it = rec.metadata.find("title"); it != rec.metadata.end()) rec.title = it->second;
  return rec;
}

std::optional<std::string> markdown_title(std::string_view text) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    auto t = trim(line);
    if (t.starts_with("# ")) return std::string(trim(t.substr(2)));
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return std::nullopt;
}

std::vector<fs::path> files_with_extension(const fs::path& root, std::string_view ext) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });
  return files;
}

std::string relative_name(const fs::path& file, const fs::path& root) {
  return fs::relative(file, root).generic_string();
}

class Collector {
 public:
  explicit Collector(CorpusLoadResult& out) : out_(out) {}

  void malformed(const std::string& path, std::size_t line, const std::string& detail) {
    ++out_.records_encountered;
    ++out_.malformed_skipped;
    out_.issues.push_back({ErrorCode::MalformedRecord, path, line, detail});
  }

  void record(RawRecord rec, std::size_t line) {
    ++out_.records_encountered;
    if (is_blank(rec.text)) {
      ++out_.empty_skipped;
      out_.issues.push_back({ErrorCode::EmptyDocument, rec.source_path, line, "blank text"});
      return;
    }
    ParsedDocument doc;
    try {
      doc.text = normalize_text(rec.text);
    } catch (const Error& e) {
      --out_.records_encountered;
      malformed(rec.source_path, line, e.what());
      return;
    }
    doc.doc_id = sha256_hex(doc.text);
    doc.source_path = std::move(rec.source_path);
    doc.title = std::move(rec.title);
    doc.metadata = std::move(rec.metadata);
    if (auto it = doc.metadata.find("kind"); it != doc.metadata.end() && it->second == "abstract") {
      doc.kind = DocumentKind::abstract;
    }
    out_.documents.push_back(std::move(doc));
  }

 private:
  CorpusLoadResult& out_;
};

}  // namespace

CorpusLoadResult load_corpus(const fs::path& root, CorpusFormat format) {
  if (!fs::exists(root)) throw Error(ErrorCode::MissingRoot, root.string());
  CorpusLoadResult result;
  Collector collect(result);

  switch (format) {
    case CorpusFormat::jsonl: {
      std::vector<fs::path> files;
      if (fs::is_regular_file(root)) files.push_back(root);
      else files = files_with_extension(root, ".jsonl");
      for (const auto& file : files) {
        std::string fallback = fs::is_regular_file(root) ? file.filename().generic_string() : relative_name(file, root);
        read_jsonl(file, [&](std::size_t line, std::optional<json> row) {
          if (!row) {
            collect.malformed(fallback, line, "invalid JSON");
            return;
          }
          try {
            collect.record(record_from_object(*row, fallback), line);
          } catch (const std::exception& e) {
            collect.malformed(fallback, line, e.what());
          }
        });
      }
      break;
    }
    case CorpusFormat::json_dir: {
      for (const auto& file : files_with_extension(root, ".json")) {
        std::string name = relative_name(file, root);
        json obj = json::parse(read_file(file), nullptr, false);
        if (obj.is_discarded()) {
          collect.malformed(name, 0, "invalid JSON");
          continue;
        }
        try {
          collect.record(record_from_object(obj, name), 0);
        } catch (const std::exception& e) {
          collect.malformed(name, 0, e.what());
        }
      }
      break;
    }
    case CorpusFormat::text_dir:
    case CorpusFormat::markdown_dir: {
      const bool markdown = format == CorpusFormat::markdown_dir;
      for (const auto& file : files_with_extension(root, markdown ? ".md" : ".txt")) {
        RawRecord rec;
        rec.source_path = relative_name(file, root);
        rec.text = read_file(file);
        if (markdown) rec.title = markdown_title(rec.text);
        collect.record(std::move(rec), 0);
      }
      break;
    }
  }

  std::stable_sort(result.documents.begin(), result.documents.end(),
                   [](const auto& a, const auto& b) { return a.source_path < b.source_path; });
  return result;
}

}  // namespace mcqforge
