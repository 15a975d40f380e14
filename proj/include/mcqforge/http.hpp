#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace mcqforge {

struct HttpResponse {
  int status = 0;
  std::string body;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

/// POSTs a JSON body to an absolute http(s) URL. Connection failures and
/// timeouts throw Error(Transient); any HTTP status is returned as-is.
HttpResponse http_post_json(const std::string& url, const std::string& body, const HttpHeaders& headers,
                            std::chrono::milliseconds timeout);

/// Joins a base URL and a path, tolerating duplicate or missing slashes.
std::string join_url(const std::string& base, const std::string& path);

}  // namespace mcqforge
