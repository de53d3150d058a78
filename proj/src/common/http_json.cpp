#include "common/http_json.hpp"

#include <cstdlib>
#include <stdexcept>

#include <httplib.h>

namespace anchorforge {

JsonEndpoint::JsonEndpoint(std::string url, std::chrono::seconds timeout) : timeout_(timeout) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("endpoint url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  origin_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

nlohmann::json JsonEndpoint::post(const nlohmann::json& body) const {
  httplib::Client cli(origin_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (const char* key = std::getenv("ANCHORFORGE_API_KEY"); key && *key)
    headers.emplace("Authorization", std::string("Bearer ") + key);
  auto res = cli.Post(path_, headers, body.dump(), "application/json");
  if (!res) throw std::runtime_error("transport error: " + httplib::to_string(res.error()));
  if (res->status != 200) throw std::runtime_error("endpoint returned HTTP " + std::to_string(res->status));
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error&) {
    throw std::runtime_error("endpoint response is not JSON");
  }
}

}  // namespace anchorforge
