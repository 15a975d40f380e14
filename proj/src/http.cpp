#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "mcqforge/errors.hpp"
#include "mcqforge/http.hpp"

namespace mcqforge {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::InvalidArgument, "URL lacks a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::string join_url(const std::string& base, const std::string& path) {
  std::string b = base;
  while (!b.empty() && b.back() == '/') b.pop_back();
  std::string p = path;
  while (!p.empty() && p.front() == '/') p.erase(p.begin());
  return b + "/" + p;
}

HttpResponse http_post_json(const std::string& url, const std::string& body, const HttpHeaders& headers,
                            std::chrono::milliseconds timeout) {
  const SplitUrl parts = split_url(url);
  httplib::Client client(parts.origin);
  const auto secs = static_cast<time_t>(timeout.count() / 1000);
  const auto usecs = static_cast<time_t>((timeout.count() % 1000) * 1000);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers hdrs;
  for (const auto& [k, v] : headers) hdrs.emplace(k, v);
  auto result = client.Post(parts.path, hdrs, body, "application/json");
  if (!result) {
    throw Error(ErrorCode::Transient, "HTTP transport failure for " + url + ": " + httplib::to_string(result.error()));
  }
  return {result->status, result->body};
}

}  // namespace mcqforge
