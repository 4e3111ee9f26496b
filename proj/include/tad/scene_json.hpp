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
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "tad/error.hpp"
#include "tad/scene.hpp"

namespace tad {

using json = nlohmann::json;

inline json vec3_to_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw DomainError("expected [x,y,z], got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json quat_to_json(const Quaternion& q) { return json::array({q.w, q.x, q.y, q.z}); }

inline Quaternion quat_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DomainError("expected [w,x,y,z], got " + j.dump());
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json to_json(const SceneBundle& b) {
  json frames = json::array();
  for (const Frame& f : b.frames) {
    json jf = {{"idx", f.index}, {"t", f.timestamp}};
    if (f.image_path) jf["image"] = *f.image_path;
    frames.push_back(std::move(jf));
  }
  json poses = json::array();
  for (const EgoPose& p : b.ego_poses) {
    poses.push_back({{"t", p.timestamp},
                     {"translation", vec3_to_json(p.translation)},
                     {"rotation", quat_to_json(p.rotation)}});
  }
  json tracks = json::array();
  for (const ObjectTrack& t : b.tracks) {
    json states = json::array();
    for (const TrackState& s : t.states) {
      states.push_back({{"idx", s.frame_index},
                        {"center", vec3_to_json(s.center)},
                        {"yaw", s.yaw},
                        {"visible", s.visible_in_front_camera}});
    }
    tracks.push_back({{"track_id", t.track_id},
                      {"category", std::string(category_name(t.category))},
                      {"states", std::move(states)}});
  }
  return {{"scene_id", b.scene_id},
          {"nominal_rate_hz", b.nominal_rate_hz},
          {"frames", std::move(frames)},
          {"ego_poses", std::move(poses)},
          {"tracks", std::move(tracks)}};
}

inline SceneBundle scene_from_json(const json& j) {
  SceneBundle b;
  try {
    b.scene_id = j.at("scene_id").get<std::string>();
    b.nominal_rate_hz = j.at("nominal_rate_hz").get<double>();
    for (const json& jf : j.at("frames")) {
      Frame f{jf.at("idx").get<int>(), jf.at("t").get<double>(), std::nullopt};
      if (jf.contains("image") && !jf["image"].is_null()) f.image_path = jf["image"].get<std::string>();
      b.frames.push_back(std::move(f));
    }
    for (const json& jp : j.at("ego_poses")) {
      b.ego_poses.push_back({jp.at("t").get<double>(), vec3_from_json(jp.at("translation")),
                             quat_from_json(jp.at("rotation"))});
    }
    for (const json& jt : j.at("tracks")) {
      ObjectTrack t;
      t.track_id = jt.at("track_id").get<std::string>();
      const auto name = jt.at("category").get<std::string>();
      const auto cat = parse_category(name);
      if (!cat) throw DomainError("unknown vehicle category '" + name + "'");
      t.category = *cat;
      for (const json& js : jt.at("states")) {
        t.states.push_back({js.at("idx").get<int>(), vec3_from_json(js.at("center")),
                            js.at("yaw").get<double>(), js.at("visible").get<bool>()});
      }
      b.tracks.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw DomainError(std::string("malformed scene bundle: ") + e.what());
  }
  return b;
}

inline std::string serialize_bundle(const SceneBundle& b) { return to_json(b).dump(2) + "\n"; }

inline SceneBundle parse_bundle(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DomainError(std::string("scene bundle is not JSON: ") + e.what());
  }
  return scene_from_json(j);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes via a temporary sibling and rename, so readers never see a torn file.
inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

inline SceneBundle load_bundle(const std::filesystem::path& path) {
  return parse_bundle(read_text_file(path));
}

inline void save_bundle(const std::filesystem::path& path, const SceneBundle& b) {
  write_text_file(path, serialize_bundle(b));
}

}  // namespace tad
