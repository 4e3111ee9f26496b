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

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tad/nuscenes.hpp"
#include "tad/scene_json.hpp"
#include "tad/synthetic.hpp"

namespace {

namespace fs = std::filesystem;
using tad::json;

bool has_code(const tad::ValidationReport& r, std::string_view code) {
  return std::any_of(r.begin(), r.end(), [&](const tad::Violation& v) { return v.code == code; });
}

TEST(Validate, WellFormedBundleIsClean) {
  auto b = tad::test::straight_scene(40);
  b.tracks.push_back(tad::test::track_at(b, "c", tad::Category::kCar, {0, 1, 2}, {5, 0, 0}));
  EXPECT_TRUE(tad::validate_bundle(b).empty());
}

TEST(Validate, NonUnitQuaternion) {
  auto b = tad::test::straight_scene(40);
  b.ego_poses[7].rotation = {2, 0, 0, 0};
  const auto r = tad::validate_bundle(b);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].code, "QUAT_NOT_UNIT");
}

TEST(Validate, DanglingFrame) {
  auto b = tad::test::straight_scene(40);
  b.tracks.push_back({"c", tad::Category::kCar, {{3, {}, 0, true}, {99, {}, 0, true}}});
  EXPECT_TRUE(has_code(tad::validate_bundle(b), "DANGLING_FRAME"));
}

TEST(Validate, OtherInvariants) {
  auto b = tad::test::straight_scene(5);
  b.ego_poses.pop_back();
  EXPECT_TRUE(has_code(tad::validate_bundle(b), "POSE_COUNT_MISMATCH"));
  b = tad::test::straight_scene(5);
  b.nominal_rate_hz = 0;
  EXPECT_TRUE(has_code(tad::validate_bundle(b), "RATE_NOT_POSITIVE"));
  b = tad::test::straight_scene(5);
  b.ego_poses[3].timestamp = b.ego_poses[2].timestamp;
  EXPECT_TRUE(has_code(tad::validate_bundle(b), "POSE_TIME_NOT_INCREASING"));
  b = tad::test::straight_scene(5);
  b.tracks.push_back({"c", tad::Category::kCar, {{3, {}, 0, true}, {2, {}, 0, true}}});
  EXPECT_TRUE(has_code(tad::validate_bundle(b), "TRACK_FRAMES_NOT_INCREASING"));
}

TEST(SceneJson, RoundTripIsFixedPoint) {
  for (const auto& s : tad::synthetic::make_suite()) {
    const auto text = tad::serialize_bundle(s.bundle);
    EXPECT_EQ(tad::serialize_bundle(tad::parse_bundle(text)), text);
  }
}

TEST(SceneJson, DoublesSurviveExactly) {
  auto b = tad::test::straight_scene(3);
  b.ego_poses[1].translation = {0.1 + 0.2, 1.0 / 3.0, -1e-17};
  const auto back = tad::parse_bundle(tad::serialize_bundle(b));
  EXPECT_EQ(back.ego_poses[1].translation.x, 0.1 + 0.2);
  EXPECT_EQ(back.ego_poses[1].translation.y, 1.0 / 3.0);
  EXPECT_EQ(back.ego_poses[1].translation.z, -1e-17);
}

TEST(SceneJson, MalformedInputThrows) {
  EXPECT_THROW(tad::parse_bundle("{\"scene_id\": 3}"), tad::Error);
  EXPECT_THROW(tad::parse_bundle("not json"), tad::Error);
}

// Hand-built NuScenes mini tables: one scene, two keyframes, one car.
class NuscenesFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    root = fs::temp_directory_path() / ("tad_nus_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(root);
    fs::create_directories(root / "v1.0-mini");
    tables["scene"] = json::array({{{"token", "sc1"}, {"name", "scene-0001"}, {"nbr_samples", 2}}});
    tables["sample"] = json::array({{{"token", "s2"}, {"scene_token", "sc1"}, {"timestamp", 1500000}},
                                    {{"token", "s1"}, {"scene_token", "sc1"}, {"timestamp", 1000000}}});
    tables["sensor"] = json::array({{{"token", "cam"}, {"channel", "CAM_FRONT"}, {"modality", "camera"}},
                                    {{"token", "lid"}, {"channel", "LIDAR_TOP"}, {"modality", "lidar"}}});
    // Camera looks along ego +x: camera axes (right, down, forward) = ego (-y, -z, +x).
    tables["calibrated_sensor"] = json::array(
        {{{"token", "cs_cam"},
          {"sensor_token", "cam"},
          {"translation", {1.5, 0.0, 1.5}},
          {"rotation", {0.5, -0.5, 0.5, -0.5}},
          {"camera_intrinsic", {{1000.0, 0.0, 800.0}, {0.0, 1000.0, 450.0}, {0.0, 0.0, 1.0}}}},
         {{"token", "cs_lid"},
          {"sensor_token", "lid"},
          {"translation", {0, 0, 1.8}},
          {"rotation", {1, 0, 0, 0}},
          {"camera_intrinsic", json::array()}}});
    tables["ego_pose"] = json::array(
        {{{"token", "ep1"}, {"timestamp", 1000000}, {"translation", {100.0, 50.0, 0.0}}, {"rotation", {1, 0, 0, 0}}},
         {{"token", "ep2"}, {"timestamp", 1500000}, {"translation", {102.0, 50.0, 0.0}}, {"rotation", {1, 0, 0, 0}}},
         {{"token", "ep9"}, {"timestamp", 1000000}, {"translation", {100.0, 50.0, 0.0}}, {"rotation", {1, 0, 0, 0}}}});
    tables["sample_data"] = json::array({
        {{"token", "sd1"}, {"sample_token", "s1"}, {"ego_pose_token", "ep1"}, {"calibrated_sensor_token", "cs_cam"},
         {"filename", "samples/CAM_FRONT/a.jpg"}, {"is_key_frame", true}, {"width", 1600}, {"height", 900}},
        {{"token", "sd2"}, {"sample_token", "s2"}, {"ego_pose_token", "ep2"}, {"calibrated_sensor_token", "cs_cam"},
         {"filename", "samples/CAM_FRONT/b.jpg"}, {"is_key_frame", true}, {"width", 1600}, {"height", 900}},
        {{"token", "sd9"}, {"sample_token", "s1"}, {"ego_pose_token", "ep9"}, {"calibrated_sensor_token", "cs_lid"},
         {"filename", "samples/LIDAR_TOP/a.bin"}, {"is_key_frame", true}},
    });
    tables["category"] = json::array({{{"token", "cat_car"}, {"name", "vehicle.car"}},
                                      {{"token", "cat_ped"}, {"name", "human.pedestrian.adult"}}});
    tables["instance"] = json::array({{{"token", "inst_car"}, {"category_token", "cat_car"}},
                                      {{"token", "inst_ped"}, {"category_token", "cat_ped"}}});
    // Car 20 m ahead of the ego at s1; 30 m behind at s2 (outside the camera).
    tables["sample_annotation"] = json::array({
        {{"token", "a1"}, {"sample_token", "s1"}, {"instance_token", "inst_car"},
         {"translation", {120.0, 50.0, 0.5}}, {"rotation", {std::cos(0.25), 0, 0, std::sin(0.25)}},
         {"visibility_token", "4"}},
        {{"token", "a2"}, {"sample_token", "s2"}, {"instance_token", "inst_car"},
         {"translation", {72.0, 50.0, 0.5}}, {"rotation", {1, 0, 0, 0}}, {"visibility_token", "4"}},
        {{"token", "a3"}, {"sample_token", "s1"}, {"instance_token", "inst_ped"},
         {"translation", {110.0, 51.0, 0.5}}, {"rotation", {1, 0, 0, 0}}},
    });
  }
  void TearDown() override { fs::remove_all(root); }

  void write() {
    for (const auto& [name, rows] : tables) {
      std::ofstream(root / "v1.0-mini" / (name + ".json")) << rows.dump();
    }
  }

  fs::path root;
  std::map<std::string, json> tables;
};

TEST_F(NuscenesFixture, OneCarTwoKeyframes) {
  write();
  const auto b = tad::ingest_nuscenes(root, "scene-0001");
  EXPECT_EQ(b.scene_id, "scene-0001");
  ASSERT_EQ(b.frames.size(), 2u);
  EXPECT_EQ(b.frames[0].index, 0);
  EXPECT_DOUBLE_EQ(b.frames[0].timestamp, 1.0);
  EXPECT_DOUBLE_EQ(b.frames[1].timestamp, 1.5);
  EXPECT_EQ(b.frames[0].image_path, (root / "samples/CAM_FRONT/a.jpg").string());
  ASSERT_EQ(b.ego_poses.size(), 2u);
  EXPECT_DOUBLE_EQ(b.ego_poses[1].translation.x, 102.0);
  ASSERT_EQ(b.tracks.size(), 1u);
  const auto& car = b.tracks[0];
  EXPECT_EQ(car.track_id, "inst_car");
  EXPECT_EQ(car.category, tad::Category::kCar);
  ASSERT_EQ(car.states.size(), 2u);
  EXPECT_EQ(car.states[0].frame_index, 0);
  EXPECT_DOUBLE_EQ(car.states[0].center.x, 120.0);
  EXPECT_NEAR(car.states[0].yaw, 0.5, 1e-12);
  EXPECT_TRUE(car.states[0].visible_in_front_camera);
  EXPECT_FALSE(car.states[1].visible_in_front_camera);
  EXPECT_TRUE(tad::validate_bundle(b).empty());
}

TEST_F(NuscenesFixture, SceneTokenAlsoMatches) {
  write();
  EXPECT_EQ(tad::ingest_nuscenes(root, "sc1").frames.size(), 2u);
}

TEST_F(NuscenesFixture, PedestriansOnlyYieldNoTracks) {
  tables["sample_annotation"].erase(0);
  tables["sample_annotation"].erase(0);
  write();
  EXPECT_TRUE(tad::ingest_nuscenes(root, "scene-0001").tracks.empty());
}

TEST_F(NuscenesFixture, LowVisibilityTokenIsNotVisible) {
  tables["sample_annotation"][0]["visibility_token"] = "1";
  write();
  EXPECT_FALSE(tad::ingest_nuscenes(root, "scene-0001").tracks[0].states[0].visible_in_front_camera);
}

TEST_F(NuscenesFixture, UnknownSceneIsNotFound) {
  write();
  EXPECT_THROW(tad::ingest_nuscenes(root, "scene-9999"), tad::NotFoundError);
}

TEST_F(NuscenesFixture, MissingTableNamesIt) {
  write();
  fs::remove(root / "v1.0-mini" / "ego_pose.json");
  try {
    tad::ingest_nuscenes(root, "scene-0001");
    FAIL();
  } catch (const tad::IngestError& e) {
    EXPECT_EQ(e.table(), "ego_pose");
  }
}

TEST_F(NuscenesFixture, DanglingForeignKeyNamesTable) {
  tables["instance"][0]["category_token"] = "nope";
  write();
  try {
    tad::ingest_nuscenes(root, "scene-0001");
    FAIL();
  } catch (const tad::IngestError& e) {
    EXPECT_EQ(e.table(), "category");
  }
}

TEST_F(NuscenesFixture, IngestionIsDeterministic) {
  write();
  EXPECT_EQ(tad::serialize_bundle(tad::ingest_nuscenes(root, "scene-0001")),
            tad::serialize_bundle(tad::ingest_nuscenes(root, "scene-0001")));
}

TEST(NuscenesCategory, ClosedVehicleSet) {
  EXPECT_EQ(tad::map_nuscenes_category("vehicle.bus.bendy"), tad::Category::kBus);
  EXPECT_EQ(tad::map_nuscenes_category("vehicle.emergency.police"), tad::Category::kEmergencyVehicle);
  EXPECT_EQ(tad::map_nuscenes_category("vehicle.construction"), tad::Category::kConstructionVehicle);
  EXPECT_FALSE(tad::map_nuscenes_category("movable_object.barrier"));
  EXPECT_FALSE(tad::map_nuscenes_category("vehicle.carriage"));
}

}  // namespace
