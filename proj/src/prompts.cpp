#include "mcqforge/prompts.hpp"

#include <map>
#include <utility>

#include "mcqforge/errors.hpp"
#include "mcqforge/text.hpp"

namespace mcqforge {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kPromptFiles[];
extern const std::size_t kPromptFileCount;
}  // namespace detail

PromptTemplate parse_prompt_file(std::string_view name, std::string_view body) {
  PromptTemplate t;
  t.name = std::string(name);
  std::string* section = nullptr;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t eol = body.find('\n', pos);
    std::string_view line = body.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    if (line.starts_with("@version ")) {
      t.version = std::string(trim(line.substr(9)));
      section = nullptr;
    } else if (line == "@system") {
      section = &t.system;
    } else if (line == "@user") {
      section = &t.user;
    } else if (section) {
      section->append(line);
      section->push_back('\n');
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  t.system = std::string(trim(t.system));
  t.user = std::string(trim(t.user));
  if (t.version.empty() || t.user.empty()) {
    throw Error(ErrorCode::InvalidArgument, "prompt " + t.name + " lacks @version or @user");
  }
  return t;
}

namespace {

const std::map<std::string, PromptTemplate, std::less<>>& registry() {
  static const auto templates = [] {
    std::map<std::string, PromptTemplate, std::less<>> out;
    for (std::size_t i = 0; i < detail::kPromptFileCount; ++i) {
      const auto& [name, body] = detail::kPromptFiles[i];
      out.emplace(std::string(name), parse_prompt_file(name, body));
    }
    return out;
  }();
  return templates;
}

}  // namespace

const PromptTemplate& prompt_template(std::string_view name) {
  const auto& reg = registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw Error(ErrorCode::InvalidArgument, "unknown prompt template: " + std::string(name));
  return it->second;
}

std::vector<std::string> prompt_names() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

}  // namespace mcqforge
