/*
 * Copyright 2026 The TAD Toolkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tad/action.hpp"
#include "tad/error.hpp"

namespace tad {

struct RecordedRequest {
  double time = 0;  // seconds since server start
  std::string path;
  nlohmann::json body;
  std::vector<std::string> text_parts;
  std::vector<std::string> image_urls;
  /// Frame labels immediately preceding an image, in order.
  std::vector<std::string> image_labels;

  std::string text() const {
    std::string out;
    for (const auto& t : text_parts) {
      if (!out.empty()) out += '\n';
      out += t;
    }
    return out;
  }
};

using MockResponder = std::function<std::optional<std::string>(const RecordedRequest&)>;

struct MockRule {
  std::optional<std::string> contains;
  std::optional<std::string> regex;
  std::optional<std::size_t> min_images;
  std::string response;
  int status = 200;
  int times = -1;  // remaining uses; negative: unlimited
  MockResponder responder;  // when set, produces the response or declines

  bool matches(const RecordedRequest& r) const {
    const auto text = r.text();
    if (contains && text.find(*contains) == std::string::npos) return false;
    if (regex && !std::regex_search(text, std::regex(*regex))) return false;
    if (min_images && r.image_urls.size() < *min_images) return false;
    return true;
  }
};

struct MockScript {
  std::vector<MockRule> rules;
  std::string default_response = "OK";
};

/// Answers ego segment action questions from the motion summary line whose span matches the frames shown.
inline std::optional<std::string> tcogmap_oracle(const RecordedRequest& r) {
  static const std::regex label_re(R"(^Frame(\d+):$)");
  int lo = -1;
  int hi = -1;
  for (const auto& label : r.image_labels) {
    std::smatch m;
    if (!std::regex_match(label, m, label_re)) continue;
    const int f = std::stoi(m[1]);
    lo = lo < 0 ? f : std::min(lo, f);
    hi = std::max(hi, f);
  }
  if (lo < 0) return std::nullopt;
  const auto text = r.text();
  if (text.find("ego vehicle") == std::string::npos || text.find("video segment") == std::string::npos) {
    return std::nullopt;
  }
  const std::regex line_re("Motion summary for Frame" + std::to_string(lo) + " to Frame" + std::to_string(hi) +
                           R"(: The ego-vehicle is ([a-z ]+)\.)");
  std::smatch m;
  if (!std::regex_search(text, m, line_re)) return std::nullopt;
  std::optional<Action> action;
  for (Action a : kAllActions) {
    if (summary_phrase(a) == m[1].str()) action = a;
  }
  if (!action) return std::nullopt;
  const std::string name(display_name(*action));
  if (text.find("Respond with exactly one letter") == std::string::npos) return name;
  static const std::regex opt_re(R"(([A-D])\. (.+?)\.(?= [A-D]\. |\s*$))");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), opt_re); it != std::sregex_iterator(); ++it) {
    if ((*it)[2].str() == name) return (*it)[1].str();
  }
  return std::nullopt;
}

inline MockResponder builtin_responder(const std::string& name) {
  if (name == "tcogmap-oracle") return tcogmap_oracle;
  throw ConfigError("mock.responder", "unknown responder '" + name + "'");
}

/// Script file: `{"default": "...", "rules": [{"contains"|"regex"|"min_images"|"responder", "response", "status", "times"}]}`.
inline MockScript mock_script_from_json(const nlohmann::json& j) {
  MockScript s;
  try {
    s.default_response = j.value("default", s.default_response);
    for (const auto& r : j.value("rules", nlohmann::json::array())) {
      MockRule rule;
      if (r.contains("contains")) rule.contains = r["contains"].get<std::string>();
      if (r.contains("regex")) rule.regex = r["regex"].get<std::string>();
      if (r.contains("min_images")) rule.min_images = r["min_images"].get<std::size_t>();
      rule.response = r.value("response", "");
      rule.status = r.value("status", 200);
      rule.times = r.value("times", -1);
      if (r.contains("responder")) rule.responder = builtin_responder(r["responder"].get<std::string>());
      s.rules.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("mock.script", e.what());
  }
  return s;
}

/// SO_REUSEADDR without SO_REUSEPORT, so a second bind to a live port fails.
inline void exclusive_socket_options(socket_t sock) {
  int yes = 1;
  setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
}

class MockServer {
 public:
  explicit MockServer(MockScript script) : script_(std::move(script)) {
    server_.set_socket_options(exclusive_socket_options);
    server_.Post(R"(.*/v1/chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
    server_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("{\"status\":\"ok\"}", "application/json");
    });
    server_.Get(R"(.*/v1/models)", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"object":"list","data":[{"id":"mock","object":"model"}]})", "application/json");
    });
  }

  ~MockServer() { stop(); }
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  /// Binds `port` (0: any free port) and serves on a background thread.
  int start(int port = 0, const std::string& host = "127.0.0.1") {
    std::lock_guard lock(life_mu_);
    if (thread_.joinable()) return port_;
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      port_ = server_.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) throw Error("startup", fmt::format("cannot bind {}:{}", host, port));
    started_ = std::chrono::steady_clock::now();
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Blocks the caller while serving; returns once stop() is called elsewhere.
  void run(int port, const std::string& host = "0.0.0.0") {
    start(port, host);
    std::unique_lock lock(life_mu_);
    stopped_cv_.wait(lock, [this] { return stopping_; });
  }

  void stop() {
    std::lock_guard lock(life_mu_);
    stopping_ = true;
    stopped_cv_.notify_all();
    if (!thread_.joinable()) return;
    server_.stop();
    thread_.join();
  }

  int port() const { return port_; }
  std::string base_url() const { return fmt::format("http://127.0.0.1:{}", port_); }

  std::vector<RecordedRequest> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::size_t request_count() const {
    std::lock_guard lock(mu_);
    return requests_.size();
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    RecordedRequest rec;
    rec.time = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    rec.path = req.path;
    try {
      rec.body = nlohmann::json::parse(req.body);
      for (const auto& m : rec.body.at("messages")) {
        const auto& content = m.at("content");
        if (content.is_string()) {
          rec.text_parts.push_back(content.get<std::string>());
          continue;
        }
        std::string previous_text;
        for (const auto& part : content) {
          const auto type = part.value("type", "");
          if (type == "text") {
            previous_text = part.value("text", "");
            rec.text_parts.push_back(previous_text);
          } else if (type == "image_url") {
            rec.image_urls.push_back(part.at("image_url").at("url").get<std::string>());
            rec.image_labels.push_back(previous_text);
            previous_text.clear();
          }
        }
      }
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(nlohmann::json({{"error", {{"message", e.what()}}}}).dump(), "application/json");
      return;
    }

    int status = 200;
    std::string answer;
    {
      std::lock_guard lock(mu_);
      requests_.push_back(rec);
      answer = script_.default_response;
      for (auto& rule : script_.rules) {
        if (rule.times == 0 || !rule.matches(rec)) continue;
        if (rule.responder) {
          auto out = rule.responder(rec);
          if (!out) continue;
          answer = *out;
        } else {
          answer = rule.response;
        }
        status = rule.status;
        if (rule.times > 0) --rule.times;
        break;
      }
    }
    res.status = status;
    if (status < 200 || status >= 300) {
      res.set_content(nlohmann::json({{"error", {{"message", answer}}}}).dump(), "application/json");
      return;
    }
    const auto words = static_cast<int>(std::count(answer.begin(), answer.end(), ' ') + 1);
    const nlohmann::json body = {
        {"id", "mock-" + std::to_string(rec.time)},
        {"object", "chat.completion"},
        {"model", rec.body.value("model", "mock")},
        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", answer}}}, {"finish_reason", "stop"}}}},
        {"usage", {{"prompt_tokens", 0}, {"completion_tokens", words}, {"total_tokens", words}}}};
    res.set_content(body.dump(), "application/json");
  }

  MockScript script_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::chrono::steady_clock::time_point started_ = std::chrono::steady_clock::now();
  mutable std::mutex mu_;
  std::vector<RecordedRequest> requests_;
  std::mutex life_mu_;
  std::condition_variable stopped_cv_;
  bool stopping_ = false;
};

}  // namespace tad
