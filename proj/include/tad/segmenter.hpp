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
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tad/action.hpp"
#include "tad/error.hpp"
#include "tad/motion.hpp"
#include "tad/scene.hpp"

namespace tad {

struct SegmentationParams {
  int num_segments = 10;
  double window_seconds = 5.0;
  double range_limit = 50.0;        // meters
  double still_displacement = 1.0;  // meters
  int frames_per_segment_cot = 4;

  void validate() const {
    if (num_segments < 1) throw ConfigError("segments.num_segments", "must be >= 1");
    if (!(window_seconds > 0.0)) throw ConfigError("segments.window_seconds", "must be > 0");
    if (!(range_limit > 0.0)) throw ConfigError("segments.range_limit", "must be > 0");
    if (!(still_displacement > 0.0)) throw ConfigError("segments.still_displacement", "must be > 0");
    if (frames_per_segment_cot < 1) throw ConfigError("segments.frames_per_segment_cot", "must be >= 1");
  }
};

struct LabelSuggestion {
  Action label;
  bool automatic;  // true: auto "stopped"; false: classifier suggestion for review
};

struct Segment {
  int segment_index = 0;
  std::vector<int> frame_indices;  // positions into bundle.frames, contiguous
  std::vector<std::string> tracks_in_range;
  std::map<std::string, LabelSuggestion> suggestions;

  int first_frame() const { return frame_indices.front(); }
  int last_frame() const { return frame_indices.back(); }
  std::size_t size() const { return frame_indices.size(); }
  bool contains(int frame) const { return frame >= first_frame() && frame <= last_frame(); }
};

/// `l` uniformly spaced windows covering the first and last frame.
///
/// Window length is round(window * rate) frames. Window i starts at
/// round(i * (N - W) / (l - 1)); with l == 1 the single window starts at 0.
/// Frame numbers here are positions in `bundle.frames`.
inline std::vector<Segment> partition_scene(const SceneBundle& bundle, const SegmentationParams& p) {
  p.validate();
  if (!(bundle.nominal_rate_hz > 0.0)) throw DomainError("nominal rate must be positive");
  const int n = bundle.frame_count();
  const int w = static_cast<int>(std::lround(p.window_seconds * bundle.nominal_rate_hz));
  if (w < 1 || n < w) {
    throw DomainError("scene " + bundle.scene_id + " has " + std::to_string(n) +
                      " frames, shorter than the " + std::to_string(w) + "-frame window");
  }
  std::vector<Segment> segments;
  segments.reserve(static_cast<std::size_t>(p.num_segments));
  for (int i = 0; i < p.num_segments; ++i) {
    const int start = p.num_segments == 1
                          ? 0
                          : static_cast<int>(std::lround(static_cast<double>(i) * (n - w) /
                                                         (p.num_segments - 1)));
    Segment seg;
    seg.segment_index = i;
    seg.frame_indices.resize(static_cast<std::size_t>(w));
    for (int k = 0; k < w; ++k) seg.frame_indices[static_cast<std::size_t>(k)] = start + k;
    segments.push_back(std::move(seg));
  }
  return segments;
}

inline double planar_distance(const Vec3& a, const Vec3& b) { return std::hypot(a.x - b.x, a.y - b.y); }

/// Whether the track is within range of the ego and front-visible at one frame position.
inline bool in_range_and_visible(const SceneBundle& bundle, const ObjectTrack& track, int frame_pos,
                                 double range_limit) {
  const TrackState* s = track.state_at(bundle.frames[static_cast<std::size_t>(frame_pos)].index);
  if (s == nullptr || !s->visible_in_front_camera) return false;
  return planar_distance(s->center, bundle.ego_poses[static_cast<std::size_t>(frame_pos)].translation) <=
         range_limit;
}

/// Tracks that come within range at some segment frame and are front-visible at some
/// (possibly different) segment frame.
inline std::vector<std::string> filter_vehicles(const SceneBundle& bundle, const Segment& seg,
                                                double range_limit) {
  std::vector<std::string> kept;
  for (const ObjectTrack& track : bundle.tracks) {
    bool near = false;
    bool seen = false;
    for (int pos : seg.frame_indices) {
      const TrackState* s = track.state_at(bundle.frames[static_cast<std::size_t>(pos)].index);
      if (s == nullptr) continue;
      if (planar_distance(s->center, bundle.ego_poses[static_cast<std::size_t>(pos)].translation) <=
          range_limit) {
        near = true;
      }
      if (s->visible_in_front_camera) seen = true;
    }
    if (near && seen) kept.push_back(track.track_id);
  }
  return kept;
}

inline std::vector<const TrackState*> states_in_segment(const SceneBundle& bundle, const Segment& seg,
                                                        const ObjectTrack& track) {
  std::vector<const TrackState*> out;
  for (int pos : seg.frame_indices) {
    if (const TrackState* s = track.state_at(bundle.frames[static_cast<std::size_t>(pos)].index)) {
      out.push_back(s);
    }
  }
  return out;
}

/// Stopped iff every pair of in-segment centers is closer than `still_displacement`
/// in the x-y plane. Fewer than two states gives no label.
inline std::optional<Action> auto_label_stopped(const SceneBundle& bundle, const Segment& seg,
                                                std::string_view track_id, double still_displacement) {
  const ObjectTrack* track = bundle.find_track(track_id);
  if (track == nullptr) return std::nullopt;
  const auto states = states_in_segment(bundle, seg, *track);
  if (states.size() < 2) return std::nullopt;
  double max_disp = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = i + 1; j < states.size(); ++j) {
      max_disp = std::max(max_disp, planar_distance(states[i]->center, states[j]->center));
    }
  }
  if (max_disp < still_displacement) return Action::kStopped;
  return std::nullopt;
}

/// k positions spread evenly over the segment, first and last included (k >= 2);
/// k == 1 picks the middle frame.
inline std::vector<int> sample_frames(const Segment& seg, int k) {
  if (seg.frame_indices.empty()) throw DomainError("cannot sample an empty segment");
  if (k < 1) throw DomainError("sample count must be >= 1");
  const auto len = static_cast<int>(seg.frame_indices.size());
  std::vector<int> out;
  if (k == 1) {
    out.push_back(seg.frame_indices[static_cast<std::size_t>((len - 1) / 2)]);
    return out;
  }
  for (int j = 0; j < k; ++j) {
    const auto pos = static_cast<std::size_t>(std::lround(static_cast<double>(j) * (len - 1) / (k - 1)));
    const int frame = seg.frame_indices[pos];
    if (out.empty() || out.back() != frame) out.push_back(frame);
  }
  return out;
}

/// Ego poses restricted to a segment's frames.
inline std::vector<EgoPose> segment_poses(const SceneBundle& bundle, const Segment& seg) {
  std::vector<EgoPose> poses;
  poses.reserve(seg.size());
  for (int pos : seg.frame_indices) poses.push_back(bundle.ego_poses[static_cast<std::size_t>(pos)]);
  return poses;
}

/// Runs the maneuver classifier on a track's in-segment centers and headings.
/// The result is a review suggestion, never ground truth.
inline Action suggest_track_label(const SceneBundle& bundle, const Segment& seg, std::string_view track_id,
                                  const Thresholds& thr) {
  const ObjectTrack* track = bundle.find_track(track_id);
  if (track == nullptr) throw NotFoundError("track " + std::string(track_id));
  std::vector<EgoPose> pseudo;
  for (int pos : seg.frame_indices) {
    const Frame& f = bundle.frames[static_cast<std::size_t>(pos)];
    if (const TrackState* s = track->state_at(f.index)) {
      pseudo.push_back({f.timestamp, s->center, Quaternion::from_yaw(s->yaw)});
    }
  }
  if (pseudo.size() < 2) {
    throw DomainError("track " + std::string(track_id) + " has fewer than 2 states in segment " +
                      std::to_string(seg.segment_index));
  }
  return classify_motion(pseudo, thr);
}

/// Partition plus per-segment range filtering and label pre-annotation.
inline std::vector<Segment> prepare_segments(const SceneBundle& bundle, const SegmentationParams& p,
                                             const Thresholds& thr) {
  auto segments = partition_scene(bundle, p);
  for (Segment& seg : segments) {
    seg.tracks_in_range = filter_vehicles(bundle, seg, p.range_limit);
    for (const auto& id : seg.tracks_in_range) {
      if (auto stopped = auto_label_stopped(bundle, seg, id, p.still_displacement)) {
        seg.suggestions.emplace(id, LabelSuggestion{*stopped, true});
        continue;
      }
      const ObjectTrack* track = bundle.find_track(id);
      if (states_in_segment(bundle, seg, *track).size() >= 2) {
        seg.suggestions.emplace(id, LabelSuggestion{suggest_track_label(bundle, seg, id, thr), false});
      }
    }
  }
  return segments;
}

}  // namespace tad
