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
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "tad/evaluator.hpp"
#include "tad/gateway.hpp"
#include "tad/motion.hpp"
#include "tad/prompt.hpp"
#include "tad/qa.hpp"
#include "tad/segmenter.hpp"
#include "tad/worker_pool.hpp"

namespace tad {

enum class Method { kBaseline, kBaselineEgoPose, kSceneCot, kTCogMap };
enum class Ablation { kFull, kFramesOnly, kSummaryOnly, kBlind };

constexpr std::string_view method_name(Method m) {
  switch (m) {
    case Method::kBaseline: return "baseline";
    case Method::kBaselineEgoPose: return "baseline-ego-pose";
    case Method::kSceneCot: return "scene-cot";
    case Method::kTCogMap: return "tcogmap";
  }
  return "";
}

constexpr std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kFramesOnly: return "frames-only";
    case Ablation::kSummaryOnly: return "summary-only";
    case Ablation::kBlind: return "blind";
  }
  return "";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : {Method::kBaseline, Method::kBaselineEgoPose, Method::kSceneCot, Method::kTCogMap}) {
    if (method_name(m) == s) return m;
  }
  return std::nullopt;
}

inline std::optional<Ablation> parse_ablation(std::string_view s) {
  for (Ablation a : {Ablation::kFull, Ablation::kFramesOnly, Ablation::kSummaryOnly, Ablation::kBlind}) {
    if (ablation_name(a) == s) return a;
  }
  return std::nullopt;
}

inline std::string frame_label(const SceneBundle& bundle, int pos) {
  return fmt::format("Frame{}:", bundle.frames[static_cast<std::size_t>(pos)].index);
}

/// Frame positions shown for an item: the segment's frames, or the whole scene.
inline std::vector<int> item_frame_positions(const SceneBundle& bundle, const QAItem& item,
                                             const std::vector<Segment>& segments) {
  if (item.segment_index) {
    const int k = *item.segment_index;
    if (k < 0 || k >= static_cast<int>(segments.size())) {
      throw PipelineError(fmt::format("{}: segment {} outside the scene's {} segments", item.id, k, segments.size()));
    }
    return segments[static_cast<std::size_t>(k)].frame_indices;
  }
  std::vector<int> all(bundle.frames.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return all;
}

/// Appends "Frame{i}:" + image for each position; throws listing every frame without an image.
inline void append_frames(PromptMessage& msg, const SceneBundle& bundle, const std::vector<int>& positions) {
  std::vector<std::string> missing;
  for (int pos : positions) {
    const auto& f = bundle.frames.at(static_cast<std::size_t>(pos));
    if (!f.image_path || f.image_path->empty()) missing.push_back(std::to_string(f.index));
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw PipelineError(fmt::format("scene {}: no image for frame(s) {}", bundle.scene_id, list));
  }
  for (int pos : positions) {
    const auto label = frame_label(bundle, pos);
    msg.parts.push_back(PromptPart::make_text(label));
    msg.parts.push_back(PromptPart::make_image(*bundle.frames[static_cast<std::size_t>(pos)].image_path, label));
  }
}

inline std::string ego_pose_lines(const SceneBundle& bundle, const std::vector<int>& positions) {
  std::string out;
  for (int pos : positions) {
    const auto& p = bundle.ego_poses.at(static_cast<std::size_t>(pos));
    out += fmt::format("Frame{}: translation=({:.2f},{:.2f},{:.2f}), yaw={:.1f}°\n",
                       bundle.frames[static_cast<std::size_t>(pos)].index, p.translation.x, p.translation.y,
                       p.translation.z, rad_to_deg(yaw_from_quaternion(p.rotation)));
  }
  return out;
}

inline PromptBundle build_baseline_prompt(const SceneBundle& bundle, const QAItem& item,
                                          const std::vector<Segment>& segments, bool include_ego_pose,
                                          const PromptLibrary& lib = PromptLibrary(), GenerationParams gen = {}) {
  PromptBundle b;
  b.params = gen;
  PromptMessage msg;
  const auto positions = item_frame_positions(bundle, item, segments);
  append_frames(msg, bundle, positions);
  if (include_ego_pose) msg.parts.push_back(PromptPart::make_text(lib.get("ego_pose_header") + ego_pose_lines(bundle, positions)));
  msg.parts.push_back(PromptPart::make_text(item.question));
  b.messages.push_back(std::move(msg));
  return b;
}

// -- TCogMap ------------------------------------------------------------------

struct MotionSummary {
  std::vector<std::string> lines;

  std::string text() const {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
  }
};

inline std::string motion_summary_line(int first_frame, int last_frame, Action a) {
  return fmt::format("Motion summary for Frame{} to Frame{}: The ego-vehicle is {}.", first_frame, last_frame,
                     summary_phrase(a));
}

/// One classifier line per segment, in segment order, with global frame indices.
inline MotionSummary build_tcogmap_context(const SceneBundle& bundle, const std::vector<Segment>& segments,
                                           const Thresholds& thr) {
  MotionSummary out;
  for (const auto& seg : segments) {
    const auto poses = segment_poses(bundle, seg);
    Action a;
    try {
      a = classify_motion(poses, thr);
    } catch (const Error& e) {
      throw PipelineError(fmt::format("scene {} segment {}: {}", bundle.scene_id, seg.segment_index, e.what()));
    }
    out.lines.push_back(motion_summary_line(bundle.frames[static_cast<std::size_t>(seg.first_frame())].index,
                                            bundle.frames[static_cast<std::size_t>(seg.last_frame())].index, a));
  }
  return out;
}

inline PromptBundle build_tcogmap_prompt(const SceneBundle& bundle, const QAItem& item,
                                         const std::vector<Segment>& segments, const MotionSummary& summary,
                                         Ablation ablation, GenerationParams gen = {}) {
  PromptBundle b;
  b.params = gen;
  PromptMessage msg;
  if (ablation == Ablation::kFull || ablation == Ablation::kFramesOnly) {
    append_frames(msg, bundle, item_frame_positions(bundle, item, segments));
  }
  if (ablation == Ablation::kFull || ablation == Ablation::kSummaryOnly) {
    msg.parts.push_back(PromptPart::make_text(summary.text()));
  }
  msg.parts.push_back(PromptPart::make_text(item.question));
  b.messages.push_back(std::move(msg));
  return b;
}

/// Re-raises a toolkit error with the item id prefixed, keeping its code.
template <typename Fn>
auto with_item_context(const std::string& item_id, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), item_id + ": " + e.what());
  }
}

inline std::string answer_with_tcogmap(const SceneBundle& bundle, const QAItem& item, ChatModel& vlm,
                                       const std::vector<Segment>& segments, const MotionSummary& summary,
                                       Ablation ablation = Ablation::kFull, GenerationParams gen = {}) {
  return with_item_context(item.id, [&] {
    return vlm.chat(build_tcogmap_prompt(bundle, item, segments, summary, ablation, gen)).text;
  });
}

// -- Scene-CoT ----------------------------------------------------------------

struct SegmentTrace {
  int segment_index = 0;
  int first_frame = 0;
  int last_frame = 0;
  std::string scene_description;  // step 1
  std::string ego_motion;         // step 2
  std::string nearby_motion;      // step 3
  std::string json_summary;       // step 4

  std::string context() const { return scene_description + "\n" + json_summary; }
};

inline nlohmann::json to_json(const SegmentTrace& t) {
  return {{"segment_index", t.segment_index}, {"first_frame", t.first_frame},    {"last_frame", t.last_frame},
          {"scene_description", t.scene_description}, {"ego_motion", t.ego_motion}, {"nearby_motion", t.nearby_motion},
          {"json_summary", t.json_summary}};
}

inline SegmentTrace segment_trace_from_json(const nlohmann::json& j) {
  return {j.at("segment_index").get<int>(),           j.at("first_frame").get<int>(),
          j.at("last_frame").get<int>(),              j.at("scene_description").get<std::string>(),
          j.at("ego_motion").get<std::string>(),      j.at("nearby_motion").get<std::string>(),
          j.at("json_summary").get<std::string>()};
}

/// Segment traces keyed by (scene, segment, prompt version, model); computed at most once per key.
class TraceCache {
 public:
  explicit TraceCache(std::filesystem::path dir = {}) : dir_(std::move(dir)) {}

  static std::string key(std::string_view scene, int segment, std::string_view prompt_version,
                         std::string_view model) {
    return fmt::format("{}|{}|{}|{}", scene, segment, prompt_version, model);
  }

  SegmentTrace get_or_compute(const std::string& key, const std::function<SegmentTrace()>& compute) {
    std::promise<SegmentTrace> promise;
    {
      std::unique_lock lock(mu_);
      auto it = entries_.find(key);
      if (it != entries_.end()) {
        auto fut = it->second;
        lock.unlock();
        return fut.get();
      }
      if (auto stored = load(key)) {
        std::promise<SegmentTrace> ready;
        ready.set_value(*stored);
        entries_.emplace(key, ready.get_future().share());
        return *stored;
      }
      entries_.emplace(key, promise.get_future().share());
    }
    try {
      auto trace = compute();
      persist(key, trace);
      promise.set_value(trace);
      return trace;
    } catch (...) {
      {
        std::lock_guard lock(mu_);
        entries_.erase(key);
      }
      promise.set_exception(std::current_exception());
      throw;
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

  std::filesystem::path file_for(const std::string& key, std::string_view suffix = ".json") const {
    if (dir_.empty()) return {};
    return dir_ / fmt::format("{:016x}{}", fnv1a(key), suffix);
  }

 private:
  std::optional<SegmentTrace> load(const std::string& key) const {
    const auto path = file_for(key);
    if (path.empty() || !std::filesystem::exists(path)) return std::nullopt;
    try {
      const auto j = nlohmann::json::parse(read_text_file(path));
      if (j.value("key", "") != key) return std::nullopt;
      return segment_trace_from_json(j.at("trace"));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }

  void persist(const std::string& key, const SegmentTrace& t) const {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    write_text_file(file_for(key), nlohmann::json({{"key", key}, {"trace", to_json(t)}}).dump(2) + "\n");
  }

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_future<SegmentTrace>> entries_;
};

inline std::string action_list_text() {
  std::string out;
  for (Action a : kAllActions) out += (out.empty() ? "" : ", ") + std::string(display_name(a));
  return out;
}

/// The four sequential vision calls for one segment. A failed step persists the partial trace to `partial_path`.
inline SegmentTrace run_segment_cot(const SceneBundle& bundle, const Segment& seg, ChatModel& vlm,
                                    const PromptLibrary& lib, int frames_per_segment, GenerationParams gen = {},
                                    const std::filesystem::path& partial_path = {}) {
  SegmentTrace t;
  t.segment_index = seg.segment_index;
  t.first_frame = bundle.frames[static_cast<std::size_t>(seg.first_frame())].index;
  t.last_frame = bundle.frames[static_cast<std::size_t>(seg.last_frame())].index;
  const auto sampled = sample_frames(seg, frames_per_segment);
  std::map<std::string, std::string> vars{{"count", std::to_string(sampled.size())},
                                          {"first", std::to_string(t.first_frame)},
                                          {"last", std::to_string(t.last_frame)},
                                          {"actions", action_list_text()}};
  auto call = [&](const std::string& tmpl, bool with_images) {
    PromptBundle b;
    b.params = gen;
    PromptMessage msg;
    if (with_images) append_frames(msg, bundle, sampled);
    msg.parts.push_back(PromptPart::make_text(lib.render(tmpl, vars)));
    b.messages.push_back(std::move(msg));
    return vlm.chat(b).text;
  };
  const std::array<std::pair<const char*, std::string SegmentTrace::*>, 4> steps{{
      {"cot_step1_scene", &SegmentTrace::scene_description},
      {"cot_step2_ego", &SegmentTrace::ego_motion},
      {"cot_step3_nearby", &SegmentTrace::nearby_motion},
      {"cot_step4_summary", &SegmentTrace::json_summary},
  }};
  for (std::size_t s = 0; s < steps.size(); ++s) {
    try {
      t.*(steps[s].second) = call(steps[s].first, s < 3);
    } catch (const Error& e) {
      if (!partial_path.empty()) {
        auto j = to_json(t);
        j["failed_step"] = s + 1;
        j["error"] = e.what();
        std::filesystem::create_directories(partial_path.parent_path());
        write_text_file(partial_path, j.dump(2) + "\n");
      }
      throw Error(e.code(), fmt::format("scene {} segment {} step {}: {}", bundle.scene_id, seg.segment_index, s + 1,
                                        e.what()));
    }
    vars["scene_description"] = t.scene_description;
    vars["ego_motion"] = t.ego_motion;
    vars["nearby_motion"] = t.nearby_motion;
  }
  if (t.context().find_first_not_of(" \n\t") == std::string::npos) {
    throw PipelineError(fmt::format("scene {} segment {}: empty chain-of-thought context", bundle.scene_id,
                                    seg.segment_index));
  }
  return t;
}

inline PromptBundle build_scene_cot_final_prompt(const QAItem& item, const std::vector<SegmentTrace>& traces,
                                                 const PromptLibrary& lib, GenerationParams gen = {}) {
  std::string blocks;
  for (const auto& t : traces) {
    blocks += lib.render("cot_segment", {{"index", std::to_string(t.segment_index)},
                                         {"first", std::to_string(t.first_frame)},
                                         {"last", std::to_string(t.last_frame)},
                                         {"context", t.context()}});
    blocks += "\n";
  }
  std::string pointer;
  if (item.segment_index) {
    const auto& t = traces.at(static_cast<std::size_t>(*item.segment_index));
    pointer = lib.render("cot_pointer", {{"index", std::to_string(t.segment_index)},
                                         {"first", std::to_string(t.first_frame)},
                                         {"last", std::to_string(t.last_frame)}});
  }
  PromptBundle b;
  b.params = gen;
  b.messages.push_back({"user", {PromptPart::make_text(lib.render(
                                     "cot_final", {{"segments", blocks}, {"pointer", pointer}, {"question", item.question}}))}});
  return b;
}

struct SceneCotOptions {
  int frames_per_segment = 4;
  std::size_t segment_parallelism = 1;
  GenerationParams generation;
};

inline std::string run_scene_cot(const SceneBundle& bundle, const QAItem& item, ChatModel& vlm, ChatModel& llm,
                                 const std::vector<Segment>& segments, const PromptLibrary& lib, TraceCache& cache,
                                 const SceneCotOptions& opt = {}) {
  return with_item_context(item.id, [&] {
    if (item.segment_index && (*item.segment_index < 0 || *item.segment_index >= static_cast<int>(segments.size()))) {
      throw PipelineError(fmt::format("segment {} outside the scene's {} segments", *item.segment_index, segments.size()));
    }
    std::vector<SegmentTrace> traces(segments.size());
    parallel_for(segments.size(), opt.segment_parallelism, [&](std::size_t j) {
      const auto key = TraceCache::key(bundle.scene_id, segments[j].segment_index, lib.version(), vlm.model_id());
      traces[j] = cache.get_or_compute(key, [&] {
        return run_segment_cot(bundle, segments[j], vlm, lib, opt.frames_per_segment, opt.generation,
                               cache.file_for(key, ".partial.json"));
      });
    });
    return llm.chat(build_scene_cot_final_prompt(item, traces, lib, opt.generation)).text;
  });
}

// -- runs ---------------------------------------------------------------------

struct RunOptions {
  Method method = Method::kTCogMap;
  Ablation ablation = Ablation::kFull;
  SegmentationParams segments;
  Thresholds motion;
  GenerationParams generation;
  std::size_t parallel = 1;
  std::size_t segment_parallelism = 1;
};

/// Per-scene state shared by all items of that scene.
struct PreparedScene {
  const SceneBundle* bundle = nullptr;
  std::vector<Segment> segments;
  MotionSummary summary;
};

/// Answers and scores every item; an item that fails is recorded with its error and score 0.
inline std::vector<ScoredItem> run_items(const std::vector<QAItem>& items,
                                         const std::map<std::string, SceneBundle>& bundles, ChatModel& vlm,
                                         ChatModel* llm, const PromptLibrary& lib, TraceCache& cache,
                                         const RunOptions& opt,
                                         const std::function<void(const ScoredItem&)>& on_done = {}) {
  if (opt.method == Method::kSceneCot && llm == nullptr) throw ConfigError("endpoint.llm_model", "scene-cot needs a text model");
  std::map<std::string, PreparedScene> scenes;
  for (const auto& item : items) {
    if (scenes.count(item.scene_id)) continue;
    auto it = bundles.find(item.scene_id);
    if (it == bundles.end()) throw NotFoundError(fmt::format("{}: no scene bundle '{}'", item.id, item.scene_id));
    PreparedScene ps{&it->second, partition_scene(it->second, opt.segments), {}};
    if (opt.method == Method::kTCogMap) ps.summary = build_tcogmap_context(it->second, ps.segments, opt.motion);
    scenes.emplace(item.scene_id, std::move(ps));
  }

  std::vector<ScoredItem> out(items.size());
  std::mutex done_mu;
  parallel_for(items.size(), opt.parallel, [&](std::size_t i) {
    const auto& item = items[i];
    const auto& ps = scenes.at(item.scene_id);
    ScoredItem s;
    try {
      std::string raw;
      switch (opt.method) {
        case Method::kBaseline:
        case Method::kBaselineEgoPose:
          raw = with_item_context(item.id, [&] {
            return vlm.chat(build_baseline_prompt(*ps.bundle, item, ps.segments,
                                                  opt.method == Method::kBaselineEgoPose, lib, opt.generation))
                .text;
          });
          break;
        case Method::kTCogMap:
          raw = answer_with_tcogmap(*ps.bundle, item, vlm, ps.segments, ps.summary, opt.ablation, opt.generation);
          break;
        case Method::kSceneCot:
          raw = run_scene_cot(*ps.bundle, item, vlm, *llm, ps.segments, lib, cache,
                              {opt.segments.frames_per_segment_cot, opt.segment_parallelism, opt.generation});
          break;
      }
      s = score_raw(item, std::move(raw));
    } catch (const Error& e) {
      s = ScoredItem{item.id, item.task, item.is_ego(), target_label(item), "", {}, 0.0};
      s.error = e.what();
    }
    out[i] = s;
    if (on_done) {
      std::lock_guard lock(done_mu);
      on_done(out[i]);
    }
  });
  return out;
}

}  // namespace tad
