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

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "tad/action.hpp"
#include "tad/annotations.hpp"
#include "tad/geometry.hpp"
#include "tad/rng.hpp"
#include "tad/scene.hpp"
#include "tad/segmenter.hpp"

/// Noise-free parametric trajectories and a small synthetic scene suite.
///
/// Generators build poses from kinematic parameters only; the intended label is
/// known by construction and does not go through the classifier.
namespace tad::synthetic {

struct GeneratorOptions {
  int min_poses = 6;
  int max_poses = 21;
  double dt = 0.5;
  double dt_jitter = 0.05;
};

/// Trajectory whose maneuver is `intended`, with every feature at least a factor
/// of two inside the default decision thresholds.
inline std::vector<EgoPose> generate_maneuver(Action intended, Rng& rng, const GeneratorOptions& opt = {}) {
  const int n = rng.between(opt.min_poses, opt.max_poses);
  const int steps = n - 1;
  const double heading0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
  const Vec3 origin{rng.uniform(-1000, 1000), rng.uniform(-1000, 1000), rng.uniform(-5, 5)};
  double t = rng.uniform(0.0, 1e5);

  // Per-step body-frame forward/lateral speeds and heading change.
  std::vector<double> forward(static_cast<std::size_t>(steps), 0.0);
  std::vector<double> lateral(static_cast<std::size_t>(steps), 0.0);
  double total_turn = 0.0;

  switch (intended) {
    case Action::kStopped:
      for (auto& f : forward) f = rng.uniform(0.0, 0.1);
      break;
    case Action::kStraightConstantSpeed: {
      const double v = rng.uniform(3.0, 15.0);
      for (auto& f : forward) f = v;
      break;
    }
    case Action::kTurnLeft:
    case Action::kTurnRight: {
      const double v = rng.uniform(3.0, 12.0);
      for (auto& f : forward) f = v;
      total_turn = deg_to_rad(rng.uniform(25.0, 120.0)) * (intended == Action::kTurnLeft ? 1.0 : -1.0);
      break;
    }
    case Action::kChangeLaneLeft:
    case Action::kChangeLaneRight: {
      const double v = rng.uniform(4.0, 15.0);
      const double mean_lat = rng.uniform(0.9, 2.0) * (intended == Action::kChangeLaneLeft ? 1.0 : -1.0);
      for (int i = 0; i < steps; ++i) {
        forward[static_cast<std::size_t>(i)] = v;
        // Raised-cosine lateral profile; its mean over the steps is exactly mean_lat.
        lateral[static_cast<std::size_t>(i)] =
            mean_lat * (1.0 - std::cos(2.0 * std::numbers::pi * (i + 0.5) / steps));
      }
      break;
    }
    case Action::kStarting:
    case Action::kStopping: {
      const double slow = rng.uniform(0.4, 0.5);
      const double fast = rng.uniform(3.0, 6.0);
      const bool starting = intended == Action::kStarting;
      for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        forward[static_cast<std::size_t>(i)] = starting ? slow + (fast - slow) * frac : fast + (slow - fast) * frac;
      }
      break;
    }
  }

  std::vector<EgoPose> poses;
  poses.reserve(static_cast<std::size_t>(n));
  Vec3 pos = origin;
  double heading = heading0;
  poses.push_back({t, pos, Quaternion::from_yaw(heading)});
  for (int i = 0; i < steps; ++i) {
    const double dt = opt.dt + rng.uniform(-opt.dt_jitter, opt.dt_jitter);
    const double next_heading = heading0 + total_turn * (i + 1) / steps;
    // Turns move along the chord; straight-line maneuvers keep heading0.
    const double travel = total_turn != 0.0 ? 0.5 * (heading + next_heading) : heading0;
    const Vec3 fwd{std::cos(travel), std::sin(travel), 0.0};
    const Vec3 left{-std::sin(travel), std::cos(travel), 0.0};
    pos = pos + (fwd * forward[static_cast<std::size_t>(i)] + left * lateral[static_cast<std::size_t>(i)]) * dt;
    t += dt;
    heading = next_heading;
    poses.push_back({t, pos, Quaternion::from_yaw(heading)});
  }
  return poses;
}

/// Reflection through the global x-z plane: y and yaw change sign.
inline std::vector<EgoPose> mirror(std::vector<EgoPose> poses) {
  for (auto& p : poses) {
    p.translation.y = -p.translation.y;
    p.rotation = {p.rotation.w, -p.rotation.x, p.rotation.y, -p.rotation.z};
  }
  return poses;
}

inline std::vector<EgoPose> time_shift(std::vector<EgoPose> poses, double offset) {
  for (auto& p : poses) p.timestamp += offset;
  return poses;
}

/// Rotation about global z followed by a translation.
inline std::vector<EgoPose> rigid_transform(std::vector<EgoPose> poses, double yaw, const Vec3& shift) {
  const Quaternion rz = Quaternion::from_yaw(yaw);
  for (auto& p : poses) {
    p.translation = rotate(rz, p.translation) + shift;
    p.rotation = rz * p.rotation;
  }
  return poses;
}

// -- scene suite ------------------------------------------------------------

/// One agent's motion over a scene, as per-frame planar states.
struct AgentPath {
  std::vector<Vec3> positions;
  std::vector<double> headings;
};

/// Constant-speed path with constant yaw rate (deg/s), optionally held still until `move_frame`.
inline AgentPath drive(int frames, double dt, Vec3 start, double heading_deg, double speed, double yaw_rate_deg = 0.0,
                       int move_frame = 0) {
  AgentPath path;
  Vec3 pos = start;
  double heading = deg_to_rad(heading_deg);
  for (int k = 0; k < frames; ++k) {
    if (k > 0 && k >= move_frame) {
      const double next = heading + deg_to_rad(yaw_rate_deg) * dt;
      const double travel = 0.5 * (heading + next);
      pos = pos + Vec3{std::cos(travel), std::sin(travel), 0.0} * (speed * dt);
      heading = next;
    }
    path.positions.push_back(pos);
    path.headings.push_back(heading);
  }
  return path;
}

/// Intended per-segment label for a path that is stopped before `move_frame` and then
/// performs `moving`. A window straddling the start is Stopped when most of its steps
/// are stationary, Starting otherwise.
inline Action intended_label(const Segment& seg, int move_frame, Action moving) {
  if (move_frame <= seg.first_frame()) return moving;
  if (move_frame > seg.last_frame()) return Action::kStopped;
  const int steps = static_cast<int>(seg.size()) - 1;
  const int stationary = move_frame - 1 - seg.first_frame();
  return 2 * stationary > steps ? Action::kStopped : Action::kStarting;
}

struct SyntheticScene {
  SceneBundle bundle;
  SceneAnnotations annotations;
};

struct TrackSpec {
  std::string id;
  Category category;
  AgentPath path;
  int move_frame;
  Action moving;
};

/// Front camera stand-in: ahead of the ego within a 70 degree horizontal field of view.
inline bool in_front_view(const EgoPose& ego, const Vec3& center) {
  const Vec3 local = to_local_frame(center - ego.translation, ego.rotation);
  return local.x > 1.0 && std::abs(std::atan2(local.y, local.x)) < deg_to_rad(35.0) && local.x < 120.0;
}

inline void write_frame_image(const std::filesystem::path& path, int frame, int scene_no) {
  cv::Mat img(72, 128, CV_8UC3, cv::Scalar(40 + 60 * scene_no, 90, 160 - 3 * frame));
  cv::putText(img, std::to_string(frame), {8, 48}, cv::FONT_HERSHEY_SIMPLEX, 1.0, {255, 255, 255}, 2);
  std::filesystem::create_directories(path.parent_path());
  cv::imwrite(path.string(), img);
}

inline SyntheticScene build_scene(const std::string& scene_id, int scene_no, const AgentPath& ego_path, int ego_move_frame,
                                  Action ego_moving, const std::vector<TrackSpec>& tracks,
                                  const std::filesystem::path& media_dir, const SegmentationParams& params) {
  constexpr int kFrames = 40;
  constexpr double kDt = 0.5;
  SyntheticScene out;
  SceneBundle& b = out.bundle;
  b.scene_id = scene_id;
  b.nominal_rate_hz = 1.0 / kDt;
  const double t0 = 1.5e9 + 1000.0 * scene_no;
  for (int k = 0; k < kFrames; ++k) {
    Frame f{k, t0 + kDt * k, std::nullopt};
    if (!media_dir.empty()) {
      const auto path = media_dir / scene_id / fmt::format("frame_{:02}.jpg", k);
      write_frame_image(path, k, scene_no);
      f.image_path = path.string();
    }
    b.frames.push_back(std::move(f));
    b.ego_poses.push_back({t0 + kDt * k, ego_path.positions[static_cast<std::size_t>(k)],
                           Quaternion::from_yaw(ego_path.headings[static_cast<std::size_t>(k)])});
  }
  for (const auto& spec : tracks) {
    ObjectTrack track{spec.id, spec.category, {}};
    for (int k = 0; k < kFrames; ++k) {
      const Vec3& c = spec.path.positions[static_cast<std::size_t>(k)];
      track.states.push_back({k, c, spec.path.headings[static_cast<std::size_t>(k)],
                              in_front_view(b.ego_poses[static_cast<std::size_t>(k)], c)});
    }
    b.tracks.push_back(std::move(track));
  }

  const auto segments = partition_scene(b, params);
  out.annotations = annotations_for(scene_id, segments);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    out.annotations.segments[s].ego = intended_label(seg, ego_move_frame, ego_moving);
    for (const auto& id : filter_vehicles(b, seg, params.range_limit)) {
      for (const auto& spec : tracks) {
        if (spec.id == id) out.annotations.segments[s].tracks[id] = intended_label(seg, spec.move_frame, spec.moving);
      }
    }
  }
  return out;
}

/// Three 20 s scenes at 2 Hz: cruising straight, a continuous left turn, and
/// waiting at a stop before pulling away. Frame images are written under
/// `media_dir` when it is non-empty.
inline std::vector<SyntheticScene> make_suite(const std::filesystem::path& media_dir = {},
                                              const SegmentationParams& params = {}) {
  constexpr int kFrames = 40;
  constexpr double kDt = 0.5;
  std::vector<SyntheticScene> suite;

  {  // Cruising at 8 m/s heading 30 degrees.
    const Vec3 start{1000, 500, 0};
    const double h = 30.0;
    const Vec3 fwd{std::cos(deg_to_rad(h)), std::sin(deg_to_rad(h)), 0};
    const Vec3 left{-fwd.y, fwd.x, 0};
    auto ego = drive(kFrames, kDt, start, h, 8.0);
    std::vector<TrackSpec> tracks{
        {"car-lead", Category::kCar, drive(kFrames, kDt, start + fwd * 20.0, h, 8.0), 0,
         Action::kStraightConstantSpeed},
        {"truck-oncoming", Category::kTruck, drive(kFrames, kDt, start + fwd * 190.0 + left * 4.0, h + 180.0, 6.0), 0,
         Action::kStraightConstantSpeed},
        {"bus-parked", Category::kBus, drive(kFrames, kDt, start + fwd * 90.0 - left * 6.0, h, 0.0, 0.0, kFrames),
         kFrames, Action::kStopped},
    };
    suite.push_back(build_scene("synth-cruise", 0, ego, 0, Action::kStraightConstantSpeed, tracks, media_dir, params));
  }
  {  // Continuous left turn, 5 deg/s at 6 m/s.
    const Vec3 start{-300, 200, 0};
    auto ego = drive(kFrames, kDt, start, 0.0, 6.0, 5.0);
    std::vector<TrackSpec> tracks{
        {"car-parked", Category::kCar, drive(kFrames, kDt, start + Vec3{25, 10, 0}, 90.0, 0.0, 0.0, kFrames), kFrames,
         Action::kStopped},
        {"moto-ahead", Category::kMotorcycle, drive(kFrames, kDt, start + Vec3{15, 0.7, 0}, 5.0, 6.0, 5.0), 0,
         Action::kTurnLeft},
    };
    suite.push_back(build_scene("synth-turn", 1, ego, 0, Action::kTurnLeft, tracks, media_dir, params));
  }
  {  // Waiting until frame 20, then 5 m/s straight; the lead car leaves at frame 17.
    const Vec3 start{50, -80, 0};
    const double h = -45.0;
    const Vec3 fwd{std::cos(deg_to_rad(h)), std::sin(deg_to_rad(h)), 0};
    const Vec3 left{-fwd.y, fwd.x, 0};
    auto ego = drive(kFrames, kDt, start, h, 5.0, 0.0, 20);
    std::vector<TrackSpec> tracks{
        {"car-lead", Category::kCar, drive(kFrames, kDt, start + fwd * 8.0, h, 5.0, 0.0, 17), 17,
         Action::kStraightConstantSpeed},
        {"truck-cross", Category::kTruck, drive(kFrames, kDt, start + fwd * 30.0 + left * 30.0, h - 90.0, 4.0), 0,
         Action::kStraightConstantSpeed},
    };
    suite.push_back(build_scene("synth-start", 2, ego, 20, Action::kStraightConstantSpeed, tracks, media_dir, params));
  }
  return suite;
}

}  // namespace tad::synthetic
