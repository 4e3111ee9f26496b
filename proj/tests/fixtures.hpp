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

#include <string>
#include <vector>

#include "tad/scene.hpp"

namespace tad::test {

/// Straight-line ego at `speed` along +x, `n` frames at 2 Hz, no tracks.
inline SceneBundle straight_scene(int n, double speed = 5.0, std::string id = "fixture") {
  SceneBundle b;
  b.scene_id = std::move(id);
  b.nominal_rate_hz = 2.0;
  for (int k = 0; k < n; ++k) {
    b.frames.push_back({k, 0.5 * k, "img/" + std::to_string(k) + ".jpg"});
    b.ego_poses.push_back({0.5 * k, {speed * 0.5 * k, 0, 0}, {1, 0, 0, 0}});
  }
  return b;
}

/// Track of one category at fixed offsets from the ego at each listed frame.
inline ObjectTrack track_at(const SceneBundle& b, std::string id, Category cat, const std::vector<int>& frames,
                            Vec3 offset, bool visible = true) {
  ObjectTrack t{std::move(id), cat, {}};
  for (int f : frames) {
    t.states.push_back({f, b.ego_poses[static_cast<std::size_t>(f)].translation + offset, 0.0, visible});
  }
  return t;
}

inline std::vector<int> frame_range(int first, int last) {
  std::vector<int> out;
  for (int f = first; f <= last; ++f) out.push_back(f);
  return out;
}

}  // namespace tad::test
