#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "metaclaw/core/error.hpp"
#include "metaclaw/evolution.hpp"
#include "metaclaw/scheduler.hpp"

namespace metaclaw {

struct HttpEndpoint {
  std::string origin;  // scheme://host[:port]
  std::string path = "/";

  static HttpEndpoint parse(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(Errc::invalid_config, "URL needs a scheme: '" + url + "'");
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
  }
};

/// POSTs `{"prompt": ...}` and expects `{"completion": ...}` back.
class HttpEvolverClient final : public EvolverClient {
 public:
  explicit HttpEvolverClient(const std::string& url, std::chrono::seconds timeout = std::chrono::seconds(60))
      : endpoint_(HttpEndpoint::parse(url)), timeout_(timeout) {}

  std::string complete(const std::string& prompt) override {
    httplib::Client cli(endpoint_.origin);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    const nlohmann::json body{{"prompt", prompt}};
    auto res = cli.Post(endpoint_.path, body.dump(), "application/json");
    if (!res) throw Error(Errc::client_error, "evolver request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(Errc::client_error, "evolver returned HTTP " + std::to_string(res->status));
    try {
      return nlohmann::json::parse(res->body).at("completion").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::client_error, std::string("evolver reply: ") + e.what());
    }
  }

 private:
  HttpEndpoint endpoint_;
  std::chrono::seconds timeout_;
};

/// GETs a JSON array of `{start, end}` events. A failed fetch yields no
/// events, which never opens a window on its own.
class HttpCalendarSource final : public CalendarSource {
 public:
  explicit HttpCalendarSource(const std::string& url, std::chrono::seconds timeout = std::chrono::seconds(10))
      : endpoint_(HttpEndpoint::parse(url)), timeout_(timeout) {}

  std::vector<CalendarEvent> events() override {
    httplib::Client cli(endpoint_.origin);
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    auto res = cli.Get(endpoint_.path);
    if (!res || res->status != 200) {
      last_error_ = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      return {};
    }
    try {
      last_error_.clear();
      return parse_calendar_events(res->body);
    } catch (const Error& e) {
      last_error_ = e.what();
      return {};
    }
  }

  const std::string& last_error() const { return last_error_; }

 private:
  HttpEndpoint endpoint_;
  std::chrono::seconds timeout_;
  std::string last_error_;
};

}  // namespace metaclaw
