#pragma once

// OpenAI-style chat-completion client over plain HTTP (cpp-httplib). TLS needs
// CPPHTTPLIB_OPENSSL_SUPPORT at build time; a local gateway is the expected setup.

#include <chrono>
#include <cstdlib>
#include <string>

#include <httplib.h>
// <resolv.h>, pulled in by httplib, defines _res as a macro; Eigen uses it as a parameter name.
#ifdef _res
#undef _res
#endif
#include <nlohmann/json.hpp>

#include "painfc/errors.hpp"
#include "painfc/llm_bridge.hpp"

namespace painfc {

struct EndpointConfig {
  bool mock = true;
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "default";
  std::string api_key;                        // usually supplied via the environment
  std::string api_key_env = "PAINFC_API_KEY";
  std::size_t max_parallel = 4;
  RetryPolicy retry;

  /// The credential is taken from the environment when the variable is set.
  void apply_environment() {
    if (const char* v = std::getenv(api_key_env.c_str()); v && *v) api_key = v;
  }
};

class HttpChatEndpoint final : public ChatEndpoint {
 public:
  explicit HttpChatEndpoint(EndpointConfig cfg) : cfg_(std::move(cfg)) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (cfg_.base_url.rfind("https://", 0) == 0)
      throw ArgumentError("endpoint " + cfg_.base_url + " needs TLS, which this build lacks; use an http:// gateway");
#endif
  }

  std::string send(const ChatRequest& request, std::chrono::milliseconds timeout) override {
    httplib::Client cli(cfg_.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout).count();
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout).count() % 1000000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    auto res = cli.Post(cfg_.path, headers, to_json(request).dump(), "application/json");
    if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw TransportError("HTTP status " + std::to_string(res->status));
    return extract_content(res->body);
  }

  /// choices[0].message.content of a chat-completion body.
  static std::string extract_content(const std::string& body) {
    try {
      const auto j = nlohmann::json::parse(body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed chat-completion body: ") + e.what());
    }
  }

 private:
  EndpointConfig cfg_;
};

}  // namespace painfc
