#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace mcqforge {

using json = nlohmann::json;

/// Reads a JSONL file; `on_line` receives (line_number starting at 1, parsed
/// object or nullopt on a parse failure). Blank lines are skipped.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(std::size_t, std::optional<json>)>& on_line);

/// Reads every line as JSON, throwing Error(ParseFailure) on the first bad line.
std::vector<json> read_jsonl_strict(const std::filesystem::path& path);

std::string to_jsonl(const std::vector<json>& rows);

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Finds the JSON object in an LLM reply: a ```json fenced block first, then
/// any fenced block, then the first balanced {...} span that parses.
std::optional<json> extract_json_object(std::string_view text);

}  // namespace mcqforge
