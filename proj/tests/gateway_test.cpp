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

#include <filesystem>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "tad/gateway.hpp"
#include "tad/mock_server.hpp"
#include "tad/worker_pool.hpp"

namespace {

namespace fs = std::filesystem;

std::string b64_decode(std::string_view in) {
  static const std::string kAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  int val = 0;
  int bits = -8;
  for (char c : in) {
    const auto pos = kAlphabet.find(c);
    if (pos == std::string::npos) break;
    val = (val << 6) + static_cast<int>(pos);
    bits += 6;
    if (bits >= 0) {
      out.push_back(static_cast<char>((val >> bits) & 0xFF));
      bits -= 8;
    }
  }
  return out;
}

tad::PromptBundle text_prompt(const std::string& text) {
  tad::PromptBundle b;
  b.messages.push_back({"user", {tad::PromptPart::make_text(text)}});
  return b;
}

tad::EndpointConfig config_for(const tad::MockServer& server, int retries = 0) {
  tad::EndpointConfig cfg;
  cfg.base_url = server.base_url();
  cfg.api_key_env.clear();
  cfg.retries = retries;
  cfg.backoff_initial_ms = 5;
  cfg.timeout_seconds = 10;
  return cfg;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / fmt::format("tad_gw_{}_{}", ::getpid(), name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

TEST(Gateway, DefaultResponse) {
  tad::MockServer server({{}, "OK"});
  server.start();
  tad::HttpChatModel model(config_for(server));
  EXPECT_EQ(model.chat(text_prompt("hello")).text, "OK");
  ASSERT_EQ(server.request_count(), 1u);
  EXPECT_EQ(server.requests()[0].body["temperature"], 0.0);
  EXPECT_EQ(server.requests()[0].body["max_tokens"], 1024);
}

TEST(Gateway, RetriesThrough429) {
  tad::MockRule busy;
  busy.status = 429;
  busy.times = 2;
  busy.response = "slow down";
  tad::MockServer server({{busy}, "done"});
  server.start();
  tad::HttpChatModel model(config_for(server, 3));
  const auto r = model.chat(text_prompt("x"));
  EXPECT_EQ(r.text, "done");
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(server.request_count(), 3u);
}

TEST(Gateway, Exhausted429IsTransportError) {
  tad::MockRule busy;
  busy.status = 429;
  tad::MockServer server({{busy}, "never"});
  server.start();
  tad::HttpChatModel model(config_for(server, 2));
  EXPECT_THROW(model.chat(text_prompt("x")), tad::TransportError);
  EXPECT_EQ(server.request_count(), 3u);
}

TEST(Gateway, ServerErrorIsModelError) {
  tad::MockRule broken;
  broken.status = 500;
  broken.response = "boom";
  tad::MockServer server({{broken}, "never"});
  server.start();
  tad::HttpChatModel model(config_for(server, 0));
  try {
    model.chat(text_prompt("x"));
    FAIL();
  } catch (const tad::ModelError& e) {
    EXPECT_EQ(e.status(), 500);
    EXPECT_NE(e.body().find("boom"), std::string::npos);
  }
}

TEST(Gateway, ConnectionRefusedIsTransportError) {
  int port = 0;
  {
    tad::MockServer server({});
    port = server.start();
  }
  tad::EndpointConfig cfg;
  cfg.base_url = fmt::format("http://127.0.0.1:{}", port);
  cfg.retries = 1;
  cfg.backoff_initial_ms = 1;
  cfg.timeout_seconds = 2;
  tad::HttpChatModel model(cfg);
  EXPECT_THROW(model.chat(text_prompt("x")), tad::TransportError);
}

TEST(Gateway, TextPartsAreSentVerbatim) {
  tad::MockServer server({});
  server.start();
  tad::HttpChatModel model(config_for(server));
  const std::string tricky = "Frame1:\n\"quotes\" \\ unicode ° {braces} \t tab";
  tad::PromptBundle b;
  b.messages.push_back({"system", {tad::PromptPart::make_text("sys")}});
  b.messages.push_back({"user", {tad::PromptPart::make_text(tricky), tad::PromptPart::make_text("q")}});
  model.chat(b);
  const auto rec = server.requests().at(0);
  EXPECT_EQ(rec.text_parts, (std::vector<std::string>{"sys", tricky, "q"}));
  EXPECT_EQ(rec.body["messages"][0]["role"], "system");
}

TEST(Gateway, ImagesAreBase64JpegWithBoundedEdge) {
  const auto dir = temp_dir("img");
  cv::Mat img(1000, 2000, CV_8UC3, cv::Scalar(10, 200, 30));
  cv::imwrite((dir / "big.jpg").string(), img);
  tad::MockServer server({});
  server.start();
  tad::PromptBundle b;
  b.messages.push_back({"user",
                        {tad::PromptPart::make_text("Frame0:"),
                         tad::PromptPart::make_image((dir / "big.jpg").string(), "Frame0:"),
                         tad::PromptPart::make_text("What?")}});
  tad::HttpChatModel model(config_for(server));
  model.chat(b);
  auto cfg = config_for(server);
  cfg.reencode_images = false;
  tad::HttpChatModel raw_model(cfg);
  raw_model.chat(b);

  const auto reqs = server.requests();
  ASSERT_EQ(reqs.size(), 2u);
  ASSERT_EQ(reqs[0].image_labels, (std::vector<std::string>{"Frame0:"}));
  const std::string prefix = "data:image/jpeg;base64,";
  ASSERT_EQ(reqs[0].image_urls[0].rfind(prefix, 0), 0u);
  const auto bytes = b64_decode(reqs[0].image_urls[0].substr(prefix.size()));
  const cv::Mat decoded = cv::imdecode(std::vector<unsigned char>(bytes.begin(), bytes.end()), cv::IMREAD_COLOR);
  EXPECT_EQ(decoded.cols, 768);
  EXPECT_EQ(decoded.rows, 384);
  EXPECT_EQ(b64_decode(reqs[1].image_urls[0].substr(prefix.size())), tad::read_text_file(dir / "big.jpg"));
  fs::remove_all(dir);
}

TEST(Gateway, RateCapHoldsOverSlidingWindow) {
  tad::MockServer server({});
  server.start();
  auto cfg = config_for(server);
  cfg.requests_per_minute = 3;
  cfg.rate_window_seconds = 0.4;
  tad::HttpChatModel model(cfg);
  tad::parallel_for(7, 4, [&](std::size_t) { model.chat(text_prompt("x")); });
  auto reqs = server.requests();
  ASSERT_EQ(reqs.size(), 7u);
  std::vector<double> t;
  for (const auto& r : reqs) t.push_back(r.time);
  std::sort(t.begin(), t.end());
  for (std::size_t i = 0; i + 3 < t.size(); ++i) EXPECT_GE(t[i + 3] - t[i], 0.4 - 0.02);
}

TEST(Gateway, TraceRedactsKey) {
  const auto dir = temp_dir("trace");
  tad::MockServer server({});
  server.start();
  auto cfg = config_for(server);
  cfg.api_key = "sekrit-123";
  cfg.trace_dir = dir;
  tad::HttpChatModel model(cfg);
  model.chat(text_prompt("mention sekrit-123 here"));
  const auto log = tad::read_text_file(dir / "gateway.jsonl");
  EXPECT_EQ(log.find("sekrit-123"), std::string::npos);
  EXPECT_NE(log.find("Bearer ***"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Gateway, ConfigValidation) {
  tad::EndpointConfig cfg;
  cfg.timeout_seconds = 0;
  EXPECT_THROW(cfg.validate(), tad::ConfigError);
  cfg = {};
  cfg.retries = -1;
  EXPECT_THROW(cfg.validate(), tad::ConfigError);
  cfg = {};
  cfg.base_url = "ftp://x";
  EXPECT_THROW(cfg.validate(), tad::ConfigError);
}

TEST(MockServer, FirstMatchingRuleWins) {
  tad::MockRule frame1;
  frame1.contains = "Frame1";
  frame1.response = "saw frame 1";
  tad::MockRule any_q;
  any_q.regex = "Q[0-9]";
  any_q.response = "a question";
  tad::MockServer server({{frame1, any_q}, "fallback"});
  server.start();
  tad::HttpChatModel model(config_for(server));
  EXPECT_EQ(model.chat(text_prompt("Frame1: Q1")).text, "saw frame 1");
  EXPECT_EQ(model.chat(text_prompt("Frame2: Q1")).text, "a question");
  EXPECT_EQ(model.chat(text_prompt("Frame2")).text, "fallback");
}

TEST(MockServer, ConcurrentRequestsAllRecorded) {
  tad::MockServer server({{}, "ok"});
  server.start();
  tad::HttpChatModel model(config_for(server));
  std::atomic<int> ok{0};
  tad::parallel_for(50, 8, [&](std::size_t i) {
    if (model.chat(text_prompt("req " + std::to_string(i))).text == "ok") ++ok;
  });
  EXPECT_EQ(ok.load(), 50);
  EXPECT_EQ(server.request_count(), 50u);
}

TEST(MockServer, PortInUseAndIdempotentStop) {
  tad::MockServer a({});
  const int port = a.start();
  tad::MockServer b({});
  EXPECT_THROW(b.start(port), tad::Error);
  a.stop();
  a.stop();
}

TEST(MockServer, ScriptFromJson) {
  const auto s = tad::mock_script_from_json(nlohmann::json::parse(
      R"({"default": "D", "rules": [{"contains": "x", "response": "y", "times": 1}, {"responder": "tcogmap-oracle"}]})"));
  EXPECT_EQ(s.default_response, "D");
  ASSERT_EQ(s.rules.size(), 2u);
  EXPECT_EQ(s.rules[0].times, 1);
  EXPECT_TRUE(static_cast<bool>(s.rules[1].responder));
  EXPECT_THROW(tad::mock_script_from_json(nlohmann::json::parse(R"({"rules": [{"responder": "nope"}]})")),
               tad::ConfigError);
}

TEST(MockServer, TcogmapOracleReadsMatchingSummaryLine) {
  tad::RecordedRequest r;
  r.image_labels = {"Frame3:", "Frame4:", "Frame5:"};
  r.text_parts = {"Frame3:", "Frame4:", "Frame5:",
                  "Motion summary for Frame0 to Frame2: The ego-vehicle is stopped.\n"
                  "Motion summary for Frame3 to Frame5: The ego-vehicle is turning left.\n",
                  "What is the motion of the ego vehicle in this video segment? Respond with exactly one letter "
                  "corresponding to the correct option. A. Stopped. B. Turn left. C. Starting. D. Turn right."};
  EXPECT_EQ(tad::tcogmap_oracle(r), "B");
  r.text_parts.back() = "What best describes the motion of the ego vehicle in this video segment? Respond with "
                        "exactly one full phrase from the following list: 'Starting'";
  EXPECT_EQ(tad::tcogmap_oracle(r), "Turn left");
  r.image_labels = {"Frame3:", "Frame4:"};
  EXPECT_FALSE(tad::tcogmap_oracle(r));
}

}  // namespace
