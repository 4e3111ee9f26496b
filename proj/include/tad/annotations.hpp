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
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tad/action.hpp"
#include "tad/error.hpp"
#include "tad/scene.hpp"
#include "tad/segmenter.hpp"

namespace tad {

/// Human (or confirmed) labels for one segment.
struct SegmentLabels {
  int segment_index = 0;
  int first_frame = 0;
  int last_frame = 0;
  std::optional<Action> ego;
  std::map<std::string, Action> tracks;
};

/// Per-segment action labels for one scene; the input to QA generation.
struct SceneAnnotations {
  std::string scene_id;
  std::vector<SegmentLabels> segments;  // ordered by segment_index

  const SegmentLabels* segment(int index) const {
    for (const auto& s : segments) {
      if (s.segment_index == index) return &s;
    }
    return nullptr;
  }
};

/// A maximal run of frames carrying one action, inclusive bounds.
struct TimelineRun {
  Action action;
  int start_frame;
  int end_frame;

  int length() const { return end_frame - start_frame + 1; }
  friend bool operator==(const TimelineRun&, const TimelineRun&) = default;
};

using Timeline = std::vector<TimelineRun>;

/// Empty track id selects the ego vehicle.
inline std::optional<Action> label_for(const SegmentLabels& seg, const std::string& track_id) {
  if (track_id.empty()) return seg.ego;
  auto it = seg.tracks.find(track_id);
  if (it == seg.tracks.end()) return std::nullopt;
  return it->second;
}

/// Frame-level timeline from overlapping segment labels.
///
/// Each frame covered by at least one segment labeling the target takes the label
/// of the covering segment whose center is nearest (lower index on ties). Runs
/// are then merged; a frame gap always ends a run.
inline Timeline derive_timeline(const SceneAnnotations& ann, const std::string& track_id = {}) {
  std::map<int, Action> per_frame;
  std::map<int, double> best_distance;
  std::vector<const SegmentLabels*> ordered;
  for (const auto& s : ann.segments) ordered.push_back(&s);
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) { return a->segment_index < b->segment_index; });
  for (const SegmentLabels* seg : ordered) {
    const auto label = label_for(*seg, track_id);
    if (!label) continue;
    const double center = 0.5 * (seg->first_frame + seg->last_frame);
    for (int f = seg->first_frame; f <= seg->last_frame; ++f) {
      const double d = std::abs(f - center);
      auto it = best_distance.find(f);
      if (it == best_distance.end() || d < it->second) {
        best_distance[f] = d;
        per_frame[f] = *label;
      }
    }
  }
  Timeline runs;
  for (const auto& [frame, action] : per_frame) {
    if (!runs.empty() && runs.back().action == action && runs.back().end_frame + 1 == frame) {
      runs.back().end_frame = frame;
    } else {
      runs.push_back({action, frame, frame});
    }
  }
  return runs;
}

/// Distinct actions in order of first occurrence.
inline std::vector<Action> first_occurrence_order(const Timeline& timeline) {
  std::vector<Action> out;
  for (const auto& run : timeline) {
    if (std::find(out.begin(), out.end(), run.action) == out.end()) out.push_back(run.action);
  }
  return out;
}

inline std::vector<std::string> validate_annotations(const SceneAnnotations& ann, const SceneBundle& bundle) {
  std::vector<std::string> problems;
  if (ann.scene_id != bundle.scene_id) problems.push_back("scene id mismatch: " + ann.scene_id);
  for (const auto& seg : ann.segments) {
    if (seg.first_frame < 0 || seg.last_frame >= bundle.frame_count() || seg.first_frame > seg.last_frame) {
      problems.push_back("segment " + std::to_string(seg.segment_index) + " frame span out of scene");
    }
    for (const auto& [id, label] : seg.tracks) {
      if (bundle.find_track(id) == nullptr) {
        problems.push_back("segment " + std::to_string(seg.segment_index) + " labels unknown track " + id);
      }
    }
  }
  return problems;
}

/// Empty annotation skeleton matching a partition.
inline SceneAnnotations annotations_for(const std::string& scene_id, const std::vector<Segment>& segments) {
  SceneAnnotations ann{scene_id, {}};
  for (const auto& seg : segments) {
    ann.segments.push_back({seg.segment_index, seg.first_frame(), seg.last_frame(), std::nullopt, {}});
  }
  return ann;
}

inline nlohmann::json to_json(const SceneAnnotations& ann) {
  nlohmann::json segs = nlohmann::json::array();
  for (const auto& s : ann.segments) {
    nlohmann::json tracks = nlohmann::json::object();
    for (const auto& [id, a] : s.tracks) tracks[id] = std::string(display_name(a));
    nlohmann::json js = {{"index", s.segment_index},
                         {"frames", {s.first_frame, s.last_frame}},
                         {"tracks", std::move(tracks)}};
    js["ego"] = s.ego ? nlohmann::json(std::string(display_name(*s.ego))) : nlohmann::json(nullptr);
    segs.push_back(std::move(js));
  }
  return {{"scene_id", ann.scene_id}, {"segments", std::move(segs)}};
}

inline Action action_from_json(const nlohmann::json& j, const std::string& where) {
  const auto text = j.get<std::string>();
  const auto a = parse_action(text);
  if (!a) throw DomainError(where + ": unknown action '" + text + "'");
  return *a;
}

inline SceneAnnotations annotations_from_json(const nlohmann::json& j) {
  SceneAnnotations ann;
  try {
    ann.scene_id = j.at("scene_id").get<std::string>();
    for (const auto& js : j.at("segments")) {
      SegmentLabels s;
      s.segment_index = js.at("index").get<int>();
      s.first_frame = js.at("frames").at(0).get<int>();
      s.last_frame = js.at("frames").at(1).get<int>();
      const std::string where = ann.scene_id + " segment " + std::to_string(s.segment_index);
      if (js.contains("ego") && !js["ego"].is_null()) s.ego = action_from_json(js["ego"], where);
      if (js.contains("tracks")) {
        for (const auto& [id, label] : js["tracks"].items()) s.tracks[id] = action_from_json(label, where);
      }
      ann.segments.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed annotations: ") + e.what());
  }
  std::sort(ann.segments.begin(), ann.segments.end(),
            [](const auto& a, const auto& b) { return a.segment_index < b.segment_index; });
  return ann;
}

}  // namespace tad
