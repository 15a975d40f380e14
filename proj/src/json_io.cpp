#include "mcqforge/json_io.hpp"

#include <fstream>
#include <sstream>

#include "mcqforge/errors.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

namespace fs = std::filesystem;

void read_jsonl(const fs::path& path, const std::function<void(std::size_t, std::optional<json>)>& on_line) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    json parsed = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (parsed.is_discarded()) {
      on_line(line_no, std::nullopt);
    } else {
      on_line(line_no, std::move(parsed));
    }
  }
}

std::vector<json> read_jsonl_strict(const fs::path& path) {
  std::vector<json> rows;
  read_jsonl(path, [&](std::size_t line_no, std::optional<json> row) {
    if (!row) {
      throw Error(ErrorCode::ParseFailure, path.string() + ":" + std::to_string(line_no) + " is not valid JSON");
    }
    rows.push_back(std::move(*row));
  });
  return rows;
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += row.dump();
    out.push_back('\n');
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

namespace {

std::optional<json> parse_object(std::string_view text) {
  json parsed = json::parse(text.begin(), text.end(), nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

std::optional<json> from_fences(std::string_view text, bool require_json_tag) {
  std::size_t pos = 0;
  while ((pos = text.find("```", pos)) != std::string_view::npos) {
    std::size_t body = pos + 3;
    std::size_t eol = text.find('\n', body);
    if (eol == std::string_view::npos) return std::nullopt;
    std::string tag = to_lower_ascii(trim(text.substr(body, eol - body)));
    std::size_t close = text.find("```", eol + 1);
    if (close == std::string_view::npos) return std::nullopt;
    if (!require_json_tag || tag == "json") {
      if (auto obj = parse_object(text.substr(eol + 1, close - eol - 1))) return obj;
    }
    pos = close + 3;
  }
  return std::nullopt;
}

}  // namespace

std::optional<json> extract_json_object(std::string_view text) {
  if (auto obj = from_fences(text, true)) return obj;
  if (auto obj = from_fences(text, false)) return obj;

  // Balanced-brace scan, aware of JSON string literals.
  for (std::size_t start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        if (auto obj = parse_object(text.substr(start, i - start + 1))) return obj;
        break;
      }
    }
  }
  return std::nullopt;
}

}  // namespace mcqforge
