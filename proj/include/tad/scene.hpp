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
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "tad/geometry.hpp"

namespace tad {

struct EgoPose {
  double timestamp = 0.0;  // seconds
  Vec3 translation;        // meters, global frame
  Quaternion rotation;     // global-from-local
};

/// Vehicle classes kept by the benchmark; everything else is dropped at ingest.
enum class Category {
  kCar,
  kBus,
  kBicycle,
  kConstructionVehicle,
  kMotorcycle,
  kTrailer,
  kTruck,
  kEmergencyVehicle,
};

inline constexpr std::array<Category, 8> kAllCategories = {
    Category::kCar,        Category::kBus,     Category::kBicycle, Category::kConstructionVehicle,
    Category::kMotorcycle, Category::kTrailer, Category::kTruck,   Category::kEmergencyVehicle,
};

constexpr std::string_view category_name(Category c) {
  switch (c) {
    case Category::kCar: return "car";
    case Category::kBus: return "bus";
    case Category::kBicycle: return "bicycle";
    case Category::kConstructionVehicle: return "construction vehicle";
    case Category::kMotorcycle: return "motorcycle";
    case Category::kTrailer: return "trailer";
    case Category::kTruck: return "truck";
    case Category::kEmergencyVehicle: return "emergency vehicle";
  }
  return "";
}

constexpr std::string_view category_plural(Category c) {
  switch (c) {
    case Category::kCar: return "cars";
    case Category::kBus: return "buses";
    case Category::kBicycle: return "bicycles";
    case Category::kConstructionVehicle: return "construction vehicles";
    case Category::kMotorcycle: return "motorcycles";
    case Category::kTrailer: return "trailers";
    case Category::kTruck: return "trucks";
    case Category::kEmergencyVehicle: return "emergency vehicles";
  }
  return "";
}

inline std::optional<Category> parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

struct TrackState {
  int frame_index = 0;
  Vec3 center;  // meters, global frame
  double yaw = 0.0;  // radians
  bool visible_in_front_camera = false;
};

struct ObjectTrack {
  std::string track_id;
  Category category = Category::kCar;
  std::vector<TrackState> states;  // strictly increasing frame_index

  const TrackState* state_at(int frame_index) const {
    auto it = std::lower_bound(states.begin(), states.end(), frame_index,
                               [](const TrackState& s, int idx) { return s.frame_index < idx; });
    return (it != states.end() && it->frame_index == frame_index) ? &*it : nullptr;
  }
};

struct Frame {
  int index = 0;
  double timestamp = 0.0;
  std::optional<std::string> image_path;
};

/// One ~20 s scene sampled at keyframe rate.
struct SceneBundle {
  std::string scene_id;
  double nominal_rate_hz = 2.0;
  std::vector<Frame> frames;
  std::vector<EgoPose> ego_poses;  // one per frame
  std::vector<ObjectTrack> tracks;

  int frame_count() const { return static_cast<int>(frames.size()); }
  double duration() const {
    return frames.size() < 2 ? 0.0 : frames.back().timestamp - frames.front().timestamp;
  }
  const ObjectTrack* find_track(std::string_view id) const {
    for (const auto& t : tracks) {
      if (t.track_id == id) return &t;
    }
    return nullptr;
  }
};

struct Violation {
  std::string code;
  std::string detail;
};

/// Every invariant breach found in a bundle; empty iff the bundle is valid.
using ValidationReport = std::vector<Violation>;

inline ValidationReport validate_bundle(const SceneBundle& bundle) {
  ValidationReport report;
  auto add = [&](std::string code, std::string detail) {
    report.push_back({std::move(code), std::move(detail)});
  };

  if (!(bundle.nominal_rate_hz > 0.0)) add("RATE_NOT_POSITIVE", "nominal_rate_hz must be > 0");
  if (bundle.ego_poses.size() != bundle.frames.size()) {
    add("POSE_COUNT_MISMATCH", std::to_string(bundle.ego_poses.size()) + " poses for " +
                                   std::to_string(bundle.frames.size()) + " frames");
  }

  std::set<int> frame_ids;
  for (std::size_t i = 0; i < bundle.frames.size(); ++i) {
    const Frame& f = bundle.frames[i];
    if (!frame_ids.insert(f.index).second) add("DUPLICATE_FRAME", "frame " + std::to_string(f.index));
    if (i > 0 && !(f.timestamp > bundle.frames[i - 1].timestamp)) {
      add("FRAME_TIME_NOT_INCREASING", "frame " + std::to_string(f.index));
    }
  }

  for (std::size_t i = 0; i < bundle.ego_poses.size(); ++i) {
    const EgoPose& p = bundle.ego_poses[i];
    if (!p.rotation.is_unit()) add("QUAT_NOT_UNIT", "ego pose " + std::to_string(i));
    if (i > 0 && !(p.timestamp > bundle.ego_poses[i - 1].timestamp)) {
      add("POSE_TIME_NOT_INCREASING", "ego pose " + std::to_string(i));
    }
  }

  for (const ObjectTrack& track : bundle.tracks) {
    for (std::size_t i = 0; i < track.states.size(); ++i) {
      const TrackState& s = track.states[i];
      if (i > 0 && s.frame_index <= track.states[i - 1].frame_index) {
        add("TRACK_FRAMES_NOT_INCREASING", track.track_id);
      }
      if (!frame_ids.contains(s.frame_index)) {
        add("DANGLING_FRAME", track.track_id + " references frame " + std::to_string(s.frame_index));
      }
    }
  }
  return report;
}

}  // namespace tad
