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
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tad/error.hpp"
#include "tad/prompt.hpp"

namespace tad {

struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string api_key_env = "TAD_API_KEY";
  std::string api_key;  // resolved from api_key_env when empty
  std::string model = "mock";
  double timeout_seconds = 120.0;
  int retries = 3;
  int requests_per_minute = 0;  // 0: uncapped
  double rate_window_seconds = 60.0;
  int backoff_initial_ms = 500;
  int backoff_max_ms = 16000;
  int max_image_edge = 768;
  bool reencode_images = true;
  std::filesystem::path trace_dir;  // empty: no tracing

  void validate() const {
    if (!(timeout_seconds > 0)) throw ConfigError("endpoint.timeout", "must be > 0");
    if (retries < 0) throw ConfigError("endpoint.retries", "must be >= 0");
    if (requests_per_minute < 0) throw ConfigError("endpoint.requests_per_minute", "must be >= 0");
    if (!(rate_window_seconds > 0)) throw ConfigError("endpoint.rate_window_seconds", "must be > 0");
    if (max_image_edge < 0) throw ConfigError("endpoint.max_image_edge", "must be >= 0");
    if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
      throw ConfigError("endpoint.base_url", "must start with http:// or https://");
    }
  }

  std::string resolved_key() const {
    if (!api_key.empty()) return api_key;
    if (api_key_env.empty()) return {};
    const char* v = std::getenv(api_key_env.c_str());
    return v ? std::string(v) : std::string();
  }
};

struct ChatResult {
  std::string text;
  int prompt_tokens = 0;
  int completion_tokens = 0;
  int attempts = 1;
};

class ChatModel {
 public:
  virtual ~ChatModel() = default;
  virtual ChatResult chat(const PromptBundle& prompt) = 0;
  virtual std::string model_id() const = 0;
};

/// Caps issued requests to `cap` per sliding window; blocks callers until a slot frees.
class RateLimiter {
 public:
  using Clock = std::chrono::steady_clock;

  RateLimiter(int cap, std::chrono::duration<double> window)
      : cap_(cap), window_(std::chrono::duration_cast<Clock::duration>(window)) {}

  void acquire() {
    if (cap_ <= 0) return;
    std::unique_lock lock(mu_);
    for (;;) {
      const auto now = Clock::now();
      while (!issued_.empty() && now - issued_.front() >= window_) issued_.pop_front();
      if (static_cast<int>(issued_.size()) < cap_) {
        issued_.push_back(now);
        return;
      }
      const auto wake = issued_.front() + window_;
      lock.unlock();
      std::this_thread::sleep_until(wake);
      lock.lock();
    }
  }

 private:
  int cap_;
  Clock::duration window_;
  std::mutex mu_;
  std::deque<Clock::time_point> issued_;
};

/// File bytes, optionally decoded and re-encoded as JPEG with a bounded longest edge.
inline std::pair<std::string, std::string> encode_image(const std::filesystem::path& path, int max_edge,
                                                        bool reencode) {
  std::string bytes;
  try {
    bytes = read_text_file(path);
  } catch (const NotFoundError&) {
    throw PipelineError("image not found: " + path.string());
  }
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (!reencode) return {ext == ".png" ? "image/png" : "image/jpeg", bytes};

  const std::vector<unsigned char> buf(bytes.begin(), bytes.end());
  cv::Mat img = cv::imdecode(buf, cv::IMREAD_COLOR);
  if (img.empty()) throw PipelineError("cannot decode image: " + path.string());
  const int edge = std::max(img.cols, img.rows);
  if (max_edge > 0 && edge > max_edge) {
    const double s = static_cast<double>(max_edge) / edge;
    cv::Mat resized;
    cv::resize(img, resized, cv::Size(), s, s, cv::INTER_AREA);
    img = resized;
  }
  std::vector<unsigned char> out;
  cv::imencode(".jpg", img, out, {cv::IMWRITE_JPEG_QUALITY, 90});
  return {"image/jpeg", std::string(out.begin(), out.end())};
}

/// OpenAI-compatible chat body; text parts are copied verbatim.
inline nlohmann::json chat_request_body(const PromptBundle& prompt, const std::string& model,
                                        const std::function<std::string(const PromptPart&)>& image_url) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : prompt.messages) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& p : m.parts) {
      if (p.kind == PromptPart::Kind::kText) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(p)}}}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", content}});
  }
  return {{"model", model},
          {"messages", messages},
          {"max_tokens", prompt.params.max_tokens},
          {"temperature", prompt.params.temperature}};
}

/// First choice's text from a chat-completions response body.
inline ChatResult parse_chat_response(int status, const std::string& body) {
  ChatResult r;
  try {
    const auto j = nlohmann::json::parse(body);
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) {
      r.text = content.get<std::string>();
    } else if (content.is_array()) {
      for (const auto& part : content) {
        if (part.value("type", "") == "text") r.text += part.value("text", "");
      }
    } else if (!content.is_null()) {
      throw DomainError("unexpected content type");
    }
    if (j.contains("usage") && j["usage"].is_object()) {
      r.prompt_tokens = j["usage"].value("prompt_tokens", 0);
      r.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
  } catch (const std::exception& e) {
    throw ModelError(status, "malformed response (" + std::string(e.what()) + "): " + body.substr(0, 512));
  }
  return r;
}

class HttpChatModel : public ChatModel {
 public:
  explicit HttpChatModel(EndpointConfig cfg)
      : cfg_(std::move(cfg)),
        limiter_(cfg_.requests_per_minute, std::chrono::duration<double>(cfg_.rate_window_seconds)) {
    cfg_.validate();
    const auto scheme_end = cfg_.base_url.find("://") + 3;
    const auto path_start = cfg_.base_url.find('/', scheme_end);
    host_ = cfg_.base_url.substr(0, path_start);
    prefix_ = path_start == std::string::npos ? "" : cfg_.base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    key_ = cfg_.resolved_key();
  }

  std::string model_id() const override { return cfg_.model; }
  const EndpointConfig& config() const { return cfg_; }

  ChatResult chat(const PromptBundle& prompt) override {
    if (prompt.messages.empty()) throw DomainError("empty prompt");
    const auto body = chat_request_body(prompt, cfg_.model, [this](const PromptPart& p) { return data_url(p); }).dump();
    const std::string path = prefix_ + "/v1/chat/completions";
    int backoff = cfg_.backoff_initial_ms;
    std::string last_failure;
    for (int attempt = 1; attempt <= cfg_.retries + 1; ++attempt) {
      limiter_.acquire();
      httplib::Client cli(host_);
      const auto secs = std::chrono::duration<double>(cfg_.timeout_seconds);
      cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(secs));
      httplib::Headers headers;
      if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
      auto res = cli.Post(path, headers, body, "application/json");
      if (!res) {
        last_failure = "transport failure: " + httplib::to_string(res.error());
      } else if (res->status == 429) {
        last_failure = "rate limited (429): " + res->body.substr(0, 256);
      } else {
        trace(body, res->status, res->body);
        if (res->status < 200 || res->status >= 300) throw ModelError(res->status, res->body.substr(0, 512));
        auto out = parse_chat_response(res->status, res->body);
        out.attempts = attempt;
        return out;
      }
      trace(body, res ? res->status : 0, last_failure);
      if (attempt <= cfg_.retries) {
        std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
        backoff = std::min(backoff * 2, cfg_.backoff_max_ms);
      }
    }
    throw TransportError(fmt::format("{} after {} attempts: {}", cfg_.base_url, cfg_.retries + 1, last_failure));
  }

 private:
  std::string data_url(const PromptPart& p) {
    std::lock_guard lock(cache_mu_);
    auto it = image_cache_.find(p.image_path);
    if (it != image_cache_.end()) return it->second;
    auto [mime, bytes] = encode_image(p.image_path, cfg_.max_image_edge, cfg_.reencode_images);
    auto url = "data:" + mime + ";base64," + httplib::detail::base64_encode(bytes);
    if (image_cache_.size() > 512) image_cache_.clear();
    return image_cache_.emplace(p.image_path, std::move(url)).first->second;
  }

  void trace(const std::string& request, int status, const std::string& response) {
    if (cfg_.trace_dir.empty()) return;
    auto req = nlohmann::json::parse(request);
    for (auto& m : req["messages"]) {
      for (auto& part : m["content"]) {
        if (part.value("type", "") == "image_url") {
          const auto url = part["image_url"]["url"].get<std::string>();
          part["image_url"]["url"] = fmt::format("{}...<{} bytes>", url.substr(0, url.find(',') + 1), url.size());
        }
      }
    }
    nlohmann::json rec = {{"endpoint", cfg_.base_url},
                          {"authorization", key_.empty() ? "" : "Bearer ***"},
                          {"request", req},
                          {"status", status},
                          {"response", response}};
    std::string line = rec.dump() + "\n";
    if (!key_.empty()) {
      for (auto pos = line.find(key_); pos != std::string::npos; pos = line.find(key_, pos)) line.replace(pos, key_.size(), "***");
    }
    std::lock_guard lock(trace_mu_);
    std::filesystem::create_directories(cfg_.trace_dir);
    std::ofstream(cfg_.trace_dir / "gateway.jsonl", std::ios::app) << line;
  }

  EndpointConfig cfg_;
  RateLimiter limiter_;
  std::string host_;
  std::string prefix_;
  std::string key_;
  std::mutex cache_mu_;
  std::map<std::string, std::string> image_cache_;
  std::mutex trace_mu_;
};

/// In-process model answering through a callback; counts calls.
class FunctionModel : public ChatModel {
 public:
  using Fn = std::function<std::string(const PromptBundle&)>;
  FunctionModel(std::string id, Fn fn) : id_(std::move(id)), fn_(std::move(fn)) {}

  ChatResult chat(const PromptBundle& prompt) override {
    ++calls_;
    return {fn_(prompt), 0, 0, 1};
  }
  std::string model_id() const override { return id_; }
  int calls() const { return calls_.load(); }

 private:
  std::string id_;
  Fn fn_;
  std::atomic<int> calls_{0};
};

}  // namespace tad
