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
#include <span>
#include <string>
#include <vector>

#include "tad/action.hpp"
#include "tad/error.hpp"
#include "tad/geometry.hpp"
#include "tad/scene.hpp"

namespace tad {

/// Decision thresholds for the rule-based maneuver classifier.
struct Thresholds {
  double v_stat = 0.2;        // m/s, stationary speed
  double v_stopping = 1.0;    // m/s, start/stop speed
  double psi_turn = 10.0;     // degrees, heading change for a turn
  double v_y_lc = 0.4;        // m/s, mean lateral speed for a lane change
  double v_x_lc = 1.0;        // m/s, mean forward speed for a lane change

  void validate() const {
    auto check = [](double v, const char* key) {
      if (!(v > 0.0)) throw ConfigError(std::string("motion.") + key, "must be > 0");
    };
    check(v_stat, "v_stat");
    check(v_stopping, "v_stopping");
    check(psi_turn, "psi_turn");
    check(v_y_lc, "v_y_lc");
    check(v_x_lc, "v_x_lc");
  }
};

struct StepVelocity {
  Vec3 velocity;  // global frame, m/s
  double speed;   // x-y norm of velocity
};

struct MotionFeatures {
  std::vector<double> speeds;     // one per consecutive pose pair
  double delta_yaw = 0.0;         // degrees, wrapped to (-180, 180]
  double omega_start = 0.0;
  double omega_end = 0.0;
  double mean_local_forward = 0.0;
  double mean_local_lateral = 0.0;
};

/// Finite-difference velocity between consecutive poses.
inline std::vector<StepVelocity> compute_velocities(std::span<const EgoPose> poses) {
  if (poses.size() < 2) throw DomainError("need at least 2 poses, got " + std::to_string(poses.size()));
  std::vector<StepVelocity> steps;
  steps.reserve(poses.size() - 1);
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const double dt = poses[i].timestamp - poses[i - 1].timestamp;
    if (!(dt > 0.0)) {
      throw DomainError("timestamps not strictly increasing at pose " + std::to_string(i));
    }
    const Vec3 v = (poses[i].translation - poses[i - 1].translation) / dt;
    steps.push_back({v, v.planar_norm()});
  }
  return steps;
}

inline MotionFeatures extract_features(std::span<const EgoPose> poses) {
  const auto steps = compute_velocities(poses);
  MotionFeatures f;
  f.speeds.reserve(steps.size());
  for (const auto& s : steps) f.speeds.push_back(s.speed);

  f.delta_yaw = wrap_degrees(rad_to_deg(yaw_from_quaternion(poses.back().rotation) -
                                        yaw_from_quaternion(poses.front().rotation)));
  f.omega_start = steps.front().speed;
  f.omega_end = steps.back().speed;

  // Step i spans poses i-1..i and is rotated with pose i's orientation.
  double sum_forward = 0.0;
  double sum_lateral = 0.0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const Vec3 local = to_local_frame(steps[i].velocity, poses[i + 1].rotation);
    sum_forward += local.x;
    sum_lateral += local.y;
  }
  const auto n = static_cast<double>(steps.size());
  f.mean_local_forward = sum_forward / n;
  f.mean_local_lateral = sum_lateral / n;
  return f;
}

/// Hierarchical rule-based maneuver label for one pose window.
inline Action classify_motion(std::span<const EgoPose> poses, const Thresholds& thr) {
  const MotionFeatures f = extract_features(poses);

  std::size_t stationary = 0;
  for (double w : f.speeds) {
    if (w < thr.v_stat) ++stationary;
  }
  if (static_cast<double>(stationary) / static_cast<double>(f.speeds.size()) > 0.5) {
    return Action::kStopped;
  }

  if (std::abs(f.delta_yaw) > thr.psi_turn) {
    return f.delta_yaw > 0 ? Action::kTurnLeft : Action::kTurnRight;
  }
  if (std::abs(f.mean_local_lateral) > thr.v_y_lc && std::abs(f.mean_local_forward) > thr.v_x_lc) {
    return f.mean_local_lateral > 0 ? Action::kChangeLaneLeft : Action::kChangeLaneRight;
  }
  if (f.omega_start < thr.v_stopping && f.omega_end > 1.5 * thr.v_stopping) return Action::kStarting;
  if (f.omega_start > 1.5 * thr.v_stopping && f.omega_end < thr.v_stopping) return Action::kStopping;
  return Action::kStraightConstantSpeed;
}

}  // namespace tad
