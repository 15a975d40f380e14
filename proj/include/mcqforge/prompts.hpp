#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace mcqforge {

/// A versioned chat prompt compiled in from prompts/<name>.prompt.
///
/// File layout: an `@version <id>` line, then `@system` and `@user`
/// sections; `{{key}}` placeholders are filled by render_template.
struct PromptTemplate {
  std::string name;
  std::string version;
  std::string system;  // may be empty
  std::string user;
};

/// Throws Error(InvalidArgument) for an unknown name.
const PromptTemplate& prompt_template(std::string_view name);

std::vector<std::string> prompt_names();

/// Parses the file format above; exposed for tests.
PromptTemplate parse_prompt_file(std::string_view name, std::string_view body);

}  // namespace mcqforge
