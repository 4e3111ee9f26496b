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

#include <filesystem>
#include <set>
#include <sstream>
#include <string>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "tad/evaluator.hpp"
#include "tad/gateway.hpp"
#include "tad/motion.hpp"
#include "tad/pipelines.hpp"
#include "tad/segmenter.hpp"

namespace tad {

struct PathsConfig {
  std::filesystem::path dataroot;
  std::filesystem::path bundles = "bundles";
  std::filesystem::path annotations = "annotations";
  std::filesystem::path qa_file = "qa.json";
  std::filesystem::path runs_dir = "runs";
  std::filesystem::path prompts_dir;
  std::filesystem::path media_dir;
  std::filesystem::path store_dir = "store";
};

struct RunConfig {
  SegmentationParams segments;
  Thresholds motion;
  EndpointConfig endpoint;
  EndpointConfig llm;  // text model for Scene-CoT's final call
  std::uint64_t seed = 0;
  Method method = Method::kTCogMap;
  Ablation ablation = Ablation::kFull;
  std::size_t parallel = 4;
  std::size_t segment_parallelism = 1;
  bool trace = false;
  int chance_trials = 1000;
  ChancePolicy chance_policy = ChancePolicy::kInterval;
  double unparseable_limit = 1.0;
  PathsConfig paths;

  void validate() const {
    segments.validate();
    motion.validate();
    endpoint.validate();
    llm.validate();
    if (parallel < 1) throw ConfigError("run.parallel", "must be >= 1");
    if (chance_trials < 1) throw ConfigError("run.chance_trials", "must be >= 1");
    if (unparseable_limit < 0 || unparseable_limit > 1) throw ConfigError("run.unparseable_limit", "must be in [0, 1]");
  }
};

namespace detail {

/// Drops `#` comments outside quotes and unquotes `key = "value"`.
inline std::string toml_to_ini(const std::string& text) {
  std::istringstream in(text);
  std::string out;
  std::string line;
  while (std::getline(in, line)) {
    bool quoted = false;
    std::size_t cut = line.size();
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        cut = i;
        break;
      }
    }
    line = line.substr(0, cut);
    const auto eq = line.find('=');
    if (eq != std::string::npos) {
      auto value = line.substr(eq + 1);
      const auto a = value.find_first_not_of(" \t");
      const auto b = value.find_last_not_of(" \t\r");
      value = a == std::string::npos ? "" : value.substr(a, b - a + 1);
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      line = line.substr(0, eq) + "=" + value;
    }
    out += line + "\n";
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  template <typename T>
  void get(const std::string& key, T& target) {
    known_.insert(key);
    const auto v = tree_.get_optional<std::string>(boost::property_tree::ptree::path_type(key, '.'));
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        target = *v;
      } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
        target = *v;
      } else if constexpr (std::is_same_v<T, bool>) {
        if (*v == "true") target = true;
        else if (*v == "false") target = false;
        else throw std::invalid_argument("expected true or false");
      } else if constexpr (std::is_floating_point_v<T>) {
        std::size_t used = 0;
        target = static_cast<T>(std::stod(*v, &used));
        if (used != v->size()) throw std::invalid_argument("trailing characters");
      } else {
        std::size_t used = 0;
        const auto n = std::stoll(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing characters");
        if constexpr (std::is_unsigned_v<T>) {
          if (n < 0) throw std::invalid_argument("must be non-negative");
        }
        target = static_cast<T>(n);
      }
    } catch (const std::exception& e) {
      throw ConfigError(key, "invalid value '" + *v + "': " + e.what());
    }
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      if (body.empty()) throw ConfigError(section, "top-level keys must live in a [section]");
      for (const auto& [key, value] : body) {
        const auto full = section + "." + key;
        if (!known_.count(full)) throw ConfigError(full, "unknown configuration key");
      }
    }
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::set<std::string> known_;
};

inline void read_endpoint(Reader& r, const std::string& section, EndpointConfig& e) {
  r.get(section + ".base_url", e.base_url);
  r.get(section + ".api_key_env", e.api_key_env);
  r.get(section + ".model", e.model);
  r.get(section + ".timeout", e.timeout_seconds);
  r.get(section + ".retries", e.retries);
  r.get(section + ".requests_per_minute", e.requests_per_minute);
  r.get(section + ".rate_window_seconds", e.rate_window_seconds);
  r.get(section + ".backoff_initial_ms", e.backoff_initial_ms);
  r.get(section + ".max_image_edge", e.max_image_edge);
  r.get(section + ".reencode_images", e.reencode_images);
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(detail::toml_to_ini(text));
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config", fmt::format("line {}: {}", e.line(), e.message()));
  }
  RunConfig c;
  detail::Reader r(tree);
  r.get("segments.num_segments", c.segments.num_segments);
  r.get("segments.window_seconds", c.segments.window_seconds);
  r.get("segments.range_limit", c.segments.range_limit);
  r.get("segments.still_displacement", c.segments.still_displacement);
  r.get("segments.frames_per_segment_cot", c.segments.frames_per_segment_cot);
  r.get("motion.v_stat", c.motion.v_stat);
  r.get("motion.v_stopping", c.motion.v_stopping);
  r.get("motion.psi_turn", c.motion.psi_turn);
  r.get("motion.v_y_lc", c.motion.v_y_lc);
  r.get("motion.v_x_lc", c.motion.v_x_lc);
  detail::read_endpoint(r, "endpoint", c.endpoint);
  c.llm = c.endpoint;
  detail::read_endpoint(r, "llm", c.llm);
  r.get("generation.seed", c.seed);
  std::string method(method_name(c.method));
  std::string ablation(ablation_name(c.ablation));
  std::string policy = "interval";
  r.get("run.method", method);
  r.get("run.ablation", ablation);
  r.get("run.parallel", c.parallel);
  r.get("run.segment_parallelism", c.segment_parallelism);
  r.get("run.trace", c.trace);
  r.get("run.chance_trials", c.chance_trials);
  r.get("run.chance_policy", policy);
  r.get("run.unparseable_limit", c.unparseable_limit);
  r.get("paths.dataroot", c.paths.dataroot);
  r.get("paths.bundles", c.paths.bundles);
  r.get("paths.annotations", c.paths.annotations);
  r.get("paths.qa_file", c.paths.qa_file);
  r.get("paths.runs_dir", c.paths.runs_dir);
  r.get("paths.prompts_dir", c.paths.prompts_dir);
  r.get("paths.media_dir", c.paths.media_dir);
  r.get("paths.store_dir", c.paths.store_dir);
  r.reject_unknown();

  if (auto m = parse_method(method)) c.method = *m;
  else throw ConfigError("run.method", "unknown method '" + method + "'");
  if (auto a = parse_ablation(ablation)) c.ablation = *a;
  else throw ConfigError("run.ablation", "unknown ablation '" + ablation + "'");
  if (auto p = parse_chance_policy(policy)) c.chance_policy = *p;
  else throw ConfigError("run.chance_policy", "unknown policy '" + policy + "'");
  c.validate();
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const NotFoundError&) {
    throw ConfigError("--config", "file not found: " + path.string());
  }
  return parse_config(text);
}

/// Snapshot recorded next to run outputs; secrets are never included.
inline nlohmann::json to_json(const RunConfig& c) {
  auto endpoint = [](const EndpointConfig& e) {
    return nlohmann::json{{"base_url", e.base_url},   {"api_key_env", e.api_key_env},
                          {"model", e.model},         {"timeout", e.timeout_seconds},
                          {"retries", e.retries},     {"requests_per_minute", e.requests_per_minute},
                          {"max_image_edge", e.max_image_edge}, {"reencode_images", e.reencode_images}};
  };
  return {{"segments",
           {{"num_segments", c.segments.num_segments},
            {"window_seconds", c.segments.window_seconds},
            {"range_limit", c.segments.range_limit},
            {"still_displacement", c.segments.still_displacement},
            {"frames_per_segment_cot", c.segments.frames_per_segment_cot}}},
          {"motion",
           {{"v_stat", c.motion.v_stat},
            {"v_stopping", c.motion.v_stopping},
            {"psi_turn", c.motion.psi_turn},
            {"v_y_lc", c.motion.v_y_lc},
            {"v_x_lc", c.motion.v_x_lc}}},
          {"endpoint", endpoint(c.endpoint)},
          {"llm", endpoint(c.llm)},
          {"generation", {{"seed", c.seed}}},
          {"run",
           {{"method", std::string(method_name(c.method))},
            {"ablation", std::string(ablation_name(c.ablation))},
            {"parallel", c.parallel},
            {"chance_trials", c.chance_trials}}}};
}

}  // namespace tad
