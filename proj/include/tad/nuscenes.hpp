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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tad/error.hpp"
#include "tad/geometry.hpp"
#include "tad/scene.hpp"
#include "tad/scene_json.hpp"

namespace tad {

/// Maps a NuScenes category name onto the closed vehicle set; nullopt drops it.
inline std::optional<Category> map_nuscenes_category(std::string_view name) {
  auto starts = [&](std::string_view p) { return name == p || name.rfind(std::string(p) + ".", 0) == 0; };
  if (starts("vehicle.car")) return Category::kCar;
  if (starts("vehicle.bus")) return Category::kBus;
  if (starts("vehicle.bicycle")) return Category::kBicycle;
  if (starts("vehicle.construction")) return Category::kConstructionVehicle;
  if (starts("vehicle.motorcycle")) return Category::kMotorcycle;
  if (starts("vehicle.trailer")) return Category::kTrailer;
  if (starts("vehicle.truck")) return Category::kTruck;
  if (starts("vehicle.emergency")) return Category::kEmergencyVehicle;
  return std::nullopt;
}

struct CameraModel {
  Vec3 translation;  // sensor in ego frame
  Quaternion rotation{1, 0, 0, 0};
  std::array<std::array<double, 3>, 3> intrinsic{};
  double width = 1600;
  double height = 900;
};

/// True iff a global point projects inside the image of a camera mounted on `ego`.
inline bool projects_into_camera(const Vec3& global, const EgoPose& ego, const CameraModel& cam) {
  const Vec3 in_ego = to_local_frame(global - ego.translation, ego.rotation);
  const Vec3 in_cam = to_local_frame(in_ego - cam.translation, cam.rotation);
  if (in_cam.z <= 1e-6) return false;
  const auto& k = cam.intrinsic;
  const double u = (k[0][0] * in_cam.x + k[0][1] * in_cam.y + k[0][2] * in_cam.z) / in_cam.z;
  const double v = (k[1][0] * in_cam.x + k[1][1] * in_cam.y + k[1][2] * in_cam.z) / in_cam.z;
  return u >= 0 && u < cam.width && v >= 0 && v < cam.height;
}

namespace detail {

class NuscenesTables {
 public:
  explicit NuscenesTables(const std::filesystem::path& dataroot) : root_(locate(dataroot)) {}

  /// Table rows keyed by token; loaded lazily.
  const std::unordered_map<std::string, json>& table(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const auto path = root_ / (name + ".json");
    if (!std::filesystem::exists(path)) throw IngestError(name, "table file missing at " + path.string());
    json rows;
    try {
      rows = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
      throw IngestError(name, std::string("malformed table: ") + e.what());
    }
    if (!rows.is_array()) throw IngestError(name, "table is not a JSON array");
    std::unordered_map<std::string, json> by_token;
    for (auto& row : rows) {
      if (!row.contains("token")) throw IngestError(name, "row without token");
      by_token.emplace(row.at("token").get<std::string>(), std::move(row));
    }
    return cache_.emplace(name, std::move(by_token)).first->second;
  }

  const json& row(const std::string& name, const std::string& token) {
    const auto& t = table(name);
    auto it = t.find(token);
    if (it == t.end()) throw IngestError(name, "dangling reference to token '" + token + "'");
    return it->second;
  }

  bool has(const std::string& name) const { return std::filesystem::exists(root_ / (name + ".json")); }

 private:
  static std::filesystem::path locate(const std::filesystem::path& dataroot) {
    if (std::filesystem::exists(dataroot / "scene.json")) return dataroot;
    if (std::filesystem::is_directory(dataroot)) {
      std::vector<std::filesystem::path> candidates;
      for (const auto& e : std::filesystem::directory_iterator(dataroot)) {
        if (e.is_directory() && e.path().filename().string().rfind("v1.0", 0) == 0 &&
            std::filesystem::exists(e.path() / "scene.json")) {
          candidates.push_back(e.path());
        }
      }
      std::sort(candidates.begin(), candidates.end());
      if (!candidates.empty()) return candidates.front();
    }
    throw IngestError("scene", "no scene.json under " + dataroot.string());
  }

  std::filesystem::path root_;
  std::map<std::string, std::unordered_map<std::string, json>> cache_;
};

template <typename T>
T field(const json& row, const char* key, const std::string& table) {
  try {
    return row.at(key).get<T>();
  } catch (const json::exception&) {
    throw IngestError(table, std::string("missing or invalid field '") + key + "'");
  }
}

inline bool is_front_camera(NuscenesTables& t, const json& sd) {
  if (t.has("sensor") && sd.contains("calibrated_sensor_token")) {
    const auto& cs = t.row("calibrated_sensor", field<std::string>(sd, "calibrated_sensor_token", "sample_data"));
    if (cs.contains("sensor_token")) {
      const auto& sensor = t.row("sensor", field<std::string>(cs, "sensor_token", "calibrated_sensor"));
      return sensor.value("channel", "") == "CAM_FRONT";
    }
  }
  const auto filename = sd.value("filename", "");
  return filename.find("CAM_FRONT/") != std::string::npos;
}

}  // namespace detail

/// Builds a SceneBundle from NuScenes v1.0 tables; `scene_id` matches the scene name or token.
inline SceneBundle ingest_nuscenes(const std::filesystem::path& dataroot, const std::string& scene_id) {
  detail::NuscenesTables t(dataroot);
  using detail::field;

  const json* scene = nullptr;
  for (const auto& [token, row] : t.table("scene")) {
    if (token == scene_id || row.value("name", "") == scene_id) {
      scene = &row;
      break;
    }
  }
  if (scene == nullptr) throw NotFoundError("scene '" + scene_id + "' not in scene table");
  const auto scene_token = field<std::string>(*scene, "token", "scene");

  // Keyframes of this scene in timestamp order.
  std::vector<const json*> samples;
  for (const auto& [token, row] : t.table("sample")) {
    if (row.value("scene_token", "") == scene_token) samples.push_back(&row);
  }
  if (samples.empty()) throw IngestError("sample", "no samples for scene " + scene_token);
  std::sort(samples.begin(), samples.end(), [](const json* a, const json* b) {
    return std::pair(a->at("timestamp").get<std::int64_t>(), a->at("token").get<std::string>()) <
           std::pair(b->at("timestamp").get<std::int64_t>(), b->at("token").get<std::string>());
  });

  // Front-camera keyframe sample_data per sample.
  std::unordered_map<std::string, const json*> front;
  for (const auto& [token, sd] : t.table("sample_data")) {
    if (!sd.value("is_key_frame", true)) continue;
    const auto sample_token = sd.value("sample_token", "");
    if (sample_token.empty()) continue;
    if (!t.table("sample").count(sample_token)) {
      throw IngestError("sample_data", "dangling sample_token '" + sample_token + "'");
    }
    if (detail::is_front_camera(t, sd)) front[sample_token] = &sd;
  }

  SceneBundle bundle;
  bundle.scene_id = scene->value("name", scene_token);
  bundle.nominal_rate_hz = 2.0;
  std::unordered_map<std::string, int> frame_of_sample;
  std::vector<CameraModel> cameras;

  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& sample = *samples[k];
    const auto sample_token = field<std::string>(sample, "token", "sample");
    const auto ts = static_cast<double>(field<std::int64_t>(sample, "timestamp", "sample")) * 1e-6;
    auto it = front.find(sample_token);
    if (it == front.end()) throw IngestError("sample_data", "no CAM_FRONT keyframe for sample " + sample_token);
    const json& sd = *it->second;
    const auto& pose = t.row("ego_pose", field<std::string>(sd, "ego_pose_token", "sample_data"));
    const auto& cs = t.row("calibrated_sensor", field<std::string>(sd, "calibrated_sensor_token", "sample_data"));

    const int idx = static_cast<int>(k);
    frame_of_sample[sample_token] = idx;
    const auto filename = sd.value("filename", "");
    bundle.frames.push_back(
        {idx, ts, filename.empty() ? std::nullopt : std::optional((dataroot / filename).lexically_normal().string())});
    try {
      bundle.ego_poses.push_back({ts, vec3_from_json(pose.at("translation")), quat_from_json(pose.at("rotation"))});
    } catch (const json::exception&) {
      throw IngestError("ego_pose", "missing translation or rotation");
    }

    CameraModel cam;
    try {
      cam.translation = vec3_from_json(cs.at("translation"));
      cam.rotation = quat_from_json(cs.at("rotation"));
      const auto& k3 = cs.at("camera_intrinsic");
      if (k3.size() != 3) throw IngestError("calibrated_sensor", "camera_intrinsic must be 3x3");
      for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) cam.intrinsic[r][c] = k3.at(r).at(c).get<double>();
      }
    } catch (const json::exception&) {
      throw IngestError("calibrated_sensor", "missing pose or camera_intrinsic");
    }
    cam.width = sd.value("width", 0.0) > 0 ? sd.value("width", 0.0) : 1600.0;
    cam.height = sd.value("height", 0.0) > 0 ? sd.value("height", 0.0) : 900.0;
    cameras.push_back(cam);
  }

  std::map<std::string, ObjectTrack> tracks;
  for (const auto& [token, ann] : t.table("sample_annotation")) {
    const auto sample_token = field<std::string>(ann, "sample_token", "sample_annotation");
    auto fit = frame_of_sample.find(sample_token);
    if (fit == frame_of_sample.end()) {
      if (!t.table("sample").count(sample_token)) {
        throw IngestError("sample_annotation", "dangling sample_token '" + sample_token + "'");
      }
      continue;
    }
    const auto instance_token = field<std::string>(ann, "instance_token", "sample_annotation");
    const auto& instance = t.row("instance", instance_token);
    const auto& category = t.row("category", field<std::string>(instance, "category_token", "instance"));
    const auto cat = map_nuscenes_category(field<std::string>(category, "name", "category"));
    if (!cat) continue;

    const int idx = fit->second;
    TrackState state;
    state.frame_index = idx;
    try {
      state.center = vec3_from_json(ann.at("translation"));
      state.yaw = yaw_from_quaternion(quat_from_json(ann.at("rotation")));
    } catch (const json::exception&) {
      throw IngestError("sample_annotation", "missing translation or rotation");
    }
    const bool occluded = ann.contains("visibility_token") && ann.at("visibility_token").is_string() &&
                          ann.at("visibility_token").get<std::string>() == "1";
    state.visible_in_front_camera =
        !occluded && projects_into_camera(state.center, bundle.ego_poses[static_cast<std::size_t>(idx)],
                                          cameras[static_cast<std::size_t>(idx)]);

    auto [tit, inserted] = tracks.try_emplace(instance_token, ObjectTrack{instance_token, *cat, {}});
    tit->second.states.push_back(state);
  }
  for (auto& [id, track] : tracks) {
    std::sort(track.states.begin(), track.states.end(),
              [](const TrackState& a, const TrackState& b) { return a.frame_index < b.frame_index; });
    bundle.tracks.push_back(std::move(track));
  }
  return bundle;
}

/// Scene names in the dataset, sorted.
inline std::vector<std::string> list_nuscenes_scenes(const std::filesystem::path& dataroot) {
  detail::NuscenesTables t(dataroot);
  std::vector<std::string> names;
  for (const auto& [token, row] : t.table("scene")) names.push_back(row.value("name", token));
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace tad
