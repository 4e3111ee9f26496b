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
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "tad/error.hpp"
#include "tad/rng.hpp"
#include "tad/scene_json.hpp"

namespace tad {

struct PromptPart {
  enum class Kind { kText, kImage };
  Kind kind = Kind::kText;
  std::string text;         // text parts
  std::string image_path;   // image parts
  std::string frame_label;  // image parts, e.g. "Frame3:"

  static PromptPart make_text(std::string t) { return {Kind::kText, std::move(t), {}, {}}; }
  static PromptPart make_image(std::string path, std::string label) {
    return {Kind::kImage, {}, std::move(path), std::move(label)};
  }
};

struct PromptMessage {
  std::string role = "user";
  std::vector<PromptPart> parts;
};

struct GenerationParams {
  int max_tokens = 1024;
  double temperature = 0.0;
};

struct PromptBundle {
  std::vector<PromptMessage> messages;
  GenerationParams params;

  std::size_t image_count() const {
    std::size_t n = 0;
    for (const auto& m : messages) {
      for (const auto& p : m.parts) n += p.kind == PromptPart::Kind::kImage ? 1 : 0;
    }
    return n;
  }

  /// All text parts joined by newlines, in message order.
  std::string text() const {
    std::string out;
    for (const auto& m : messages) {
      for (const auto& p : m.parts) {
        if (p.kind != PromptPart::Kind::kText) continue;
        if (!out.empty()) out += '\n';
        out += p.text;
      }
    }
    return out;
  }
};

/// Image parts in order and each preceded by a text part equal to its label.
inline bool labels_precede_images(const PromptBundle& b) {
  for (const auto& m : b.messages) {
    for (std::size_t i = 0; i < m.parts.size(); ++i) {
      const auto& p = m.parts[i];
      if (p.kind != PromptPart::Kind::kImage) continue;
      if (i == 0 || m.parts[i - 1].kind != PromptPart::Kind::kText || m.parts[i - 1].text != p.frame_label) {
        return false;
      }
    }
  }
  return true;
}

inline nlohmann::json to_json(const PromptBundle& b) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : b.messages) {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : m.parts) {
      if (p.kind == PromptPart::Kind::kText) {
        parts.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        parts.push_back({{"type", "image"}, {"path", p.image_path}, {"label", p.frame_label}});
      }
    }
    msgs.push_back({{"role", m.role}, {"parts", parts}});
  }
  return {{"messages", msgs}, {"max_tokens", b.params.max_tokens}, {"temperature", b.params.temperature}};
}

/// Substitutes `{name}` placeholders; `{{` and `}}` are literal braces.
inline std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  for (std::size_t i = 0; i < tmpl.size(); ++i) {
    const char c = tmpl[i];
    if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
      out += '{';
      ++i;
    } else if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
      out += '}';
      ++i;
    } else if (c == '{') {
      const auto close = tmpl.find('}', i);
      if (close == std::string_view::npos) throw PipelineError("unterminated placeholder in template");
      const std::string key(tmpl.substr(i + 1, close - i - 1));
      auto it = vars.find(key);
      if (it == vars.end()) throw PipelineError("template placeholder '{" + key + "}' has no value");
      out += it->second;
      i = close;
    } else {
      out += c;
    }
  }
  return out;
}

// Scene-CoT step prompts are reconstructions; their exact published wording is not available.
inline const std::map<std::string, std::string>& default_prompt_templates() {
  static const std::map<std::string, std::string> kDefaults = {
      {"cot_step1_scene",
       "These {count} images are frames Frame{first} to Frame{last} of a driving video, in temporal order, "
       "recorded by the front camera of the ego vehicle. Give a high-level description of the scene: road "
       "layout, traffic participants, traffic control and conditions.\n"},
      {"cot_step2_ego",
       "Scene description:\n{scene_description}\n\nFocus only on the ego vehicle, the vehicle carrying the "
       "camera. Describe how it moves across these frames and name its action using one of: {actions}.\n"},
      {"cot_step3_nearby",
       "Scene description:\n{scene_description}\n\nEgo vehicle motion:\n{ego_motion}\n\nNow consider the "
       "other vehicles close to the ego vehicle. For each one, give an identifier, its type, and its action "
       "using one of: {actions}.\n"},
      {"cot_step4_summary",
       "Ego vehicle motion:\n{ego_motion}\n\nNearby vehicle motion:\n{nearby_motion}\n\nSummarize the motion "
       "as JSON with the fields \"ego_vehicle\" (action) and \"nearby_vehicles\" (list of {{\"id\", \"type\", "
       "\"action\"}}). Output only the JSON.\n"},
      {"cot_segment",
       "Segment {index} (Frame{first} to Frame{last}):\n{context}\n"},
      {"cot_final",
       "The following are descriptions of consecutive segments of a driving video recorded by the front "
       "camera of the ego vehicle, in temporal order.\n\n{segments}\n{pointer}{question}\n"},
      {"cot_pointer",
       "The question refers to Segment {index} (Frame{first} to Frame{last}).\n"},
      {"ego_pose_header",
       "Ego vehicle pose at each frame (global frame, meters and degrees):\n"},
  };
  return kDefaults;
}

class PromptLibrary {
 public:
  PromptLibrary() : templates_(default_prompt_templates()) { refresh_version(); }

  /// Overrides defaults with `<name>.txt` files found in `dir`; unknown files are ignored.
  explicit PromptLibrary(const std::filesystem::path& dir) : PromptLibrary() {
    for (auto& [name, text] : templates_) {
      const auto path = dir / (name + ".txt");
      if (std::filesystem::exists(path)) text = read_text_file(path);
    }
    refresh_version();
  }

  const std::string& get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw PipelineError("unknown prompt template '" + name + "'");
    return it->second;
  }

  std::string render(const std::string& name, const std::map<std::string, std::string>& vars) const {
    return render_template(get(name), vars);
  }

  /// Content hash of every template; part of the Scene-CoT cache key.
  const std::string& version() const { return version_; }

 private:
  void refresh_version() {
    std::string all;
    for (const auto& [name, text] : templates_) all += name + '\0' + text + '\0';
    version_ = fmt::format("p{:016x}", fnv1a(all));
  }

  std::map<std::string, std::string> templates_;
  std::string version_;
};

}  // namespace tad
