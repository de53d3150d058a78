#pragma once

#include <chrono>
#include <string>

#include <json.hpp>

namespace anchorforge {

/// JSON-over-HTTP endpoint. Sends "Authorization: Bearer $ANCHORFORGE_API_KEY"
/// when the variable is set; the key is never included in error text.
class JsonEndpoint {
 public:
  JsonEndpoint(std::string url, std::chrono::seconds timeout);
  nlohmann::json post(const nlohmann::json& body) const;

 private:
  std::string origin_, path_;
  std::chrono::seconds timeout_;
};

}  // namespace anchorforge
