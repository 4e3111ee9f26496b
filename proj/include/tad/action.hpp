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
#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

namespace tad {

/// The closed eight-maneuver taxonomy. Enumerator order matches the
/// phrase list shown in exact-answer questions.
enum class Action {
  kStarting,
  kStopping,
  kTurnLeft,
  kTurnRight,
  kChangeLaneLeft,
  kChangeLaneRight,
  kStraightConstantSpeed,
  kStopped,
};

inline constexpr std::array<Action, 8> kAllActions = {
    Action::kStarting,       Action::kStopping,        Action::kTurnLeft,
    Action::kTurnRight,      Action::kChangeLaneLeft,  Action::kChangeLaneRight,
    Action::kStraightConstantSpeed, Action::kStopped,
};

/// Benchmark phrase, verbatim.
constexpr std::string_view display_name(Action a) {
  switch (a) {
    case Action::kStarting: return "Starting";
    case Action::kStopping: return "Stopping";
    case Action::kTurnLeft: return "Turn left";
    case Action::kTurnRight: return "Turn right";
    case Action::kChangeLaneLeft: return "Change lane to the left";
    case Action::kChangeLaneRight: return "Change lane to the right";
    case Action::kStraightConstantSpeed: return "Straight, constant speed";
    case Action::kStopped: return "Stopped";
  }
  return "";
}

/// Verb phrase completing "The ego-vehicle is ..." in motion summaries.
constexpr std::string_view summary_phrase(Action a) {
  switch (a) {
    case Action::kStarting: return "starting";
    case Action::kStopping: return "stopping";
    case Action::kTurnLeft: return "turning left";
    case Action::kTurnRight: return "turning right";
    case Action::kChangeLaneLeft: return "changing lane to the left";
    case Action::kChangeLaneRight: return "changing lane to the right";
    case Action::kStraightConstantSpeed: return "going straight at constant speed";
    case Action::kStopped: return "stopped";
  }
  return "";
}

/// Lowercase, punctuation removed, whitespace collapsed and trimmed.
inline std::string canonicalize_phrase(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(uc)));
    } else if (std::isspace(uc) || std::ispunct(uc)) {
      pending_space = true;
    }
  }
  return out;
}

/// Accepts any spelling whose canonical form equals a benchmark phrase.
inline std::optional<Action> parse_action(std::string_view text) {
  const std::string canon = canonicalize_phrase(text);
  for (Action a : kAllActions) {
    if (canonicalize_phrase(display_name(a)) == canon) return a;
  }
  return std::nullopt;
}

/// Left/right swap under reflection of the x-z plane; other labels fixed.
constexpr Action mirrored(Action a) {
  switch (a) {
    case Action::kTurnLeft: return Action::kTurnRight;
    case Action::kTurnRight: return Action::kTurnLeft;
    case Action::kChangeLaneLeft: return Action::kChangeLaneRight;
    case Action::kChangeLaneRight: return Action::kChangeLaneLeft;
    default: return a;
  }
}

}  // namespace tad
