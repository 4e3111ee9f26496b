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
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tad/action.hpp"
#include "tad/annotations.hpp"
#include "tad/error.hpp"
#include "tad/rng.hpp"
#include "tad/scene.hpp"
#include "tad/segmenter.hpp"

namespace tad {

enum class Task {
  kExactAction,
  kMultipleChoiceAction,
  kActionDuration,
  kTemporalOrdering,
  kActionLocalization,
  kRelativeLocalization,
  kObjectLocalization,
};

inline constexpr std::array<Task, 7> kAllTasks = {
    Task::kExactAction,        Task::kMultipleChoiceAction, Task::kActionDuration,
    Task::kTemporalOrdering,   Task::kActionLocalization,   Task::kRelativeLocalization,
    Task::kObjectLocalization,
};

constexpr std::string_view task_name(Task t) {
  switch (t) {
    case Task::kExactAction: return "Exact Answer Action Recognition";
    case Task::kMultipleChoiceAction: return "Multiple Choice Action Recognition";
    case Task::kActionDuration: return "Action Duration";
    case Task::kTemporalOrdering: return "Temporal Ordering";
    case Task::kActionLocalization: return "Temporal Action Localization";
    case Task::kRelativeLocalization: return "Relative Temporal Action Localization";
    case Task::kObjectLocalization: return "Temporal Object Localization";
  }
  return "";
}

/// Short key used in ids, CLI `--tasks` lists and report columns.
constexpr std::string_view task_code(Task t) {
  switch (t) {
    case Task::kExactAction: return "ea";
    case Task::kMultipleChoiceAction: return "mc";
    case Task::kActionDuration: return "duration";
    case Task::kTemporalOrdering: return "ordering";
    case Task::kActionLocalization: return "action-loc";
    case Task::kRelativeLocalization: return "relative-loc";
    case Task::kObjectLocalization: return "object-loc";
  }
  return "";
}

inline std::optional<Task> parse_task(std::string_view text) {
  for (Task t : kAllTasks) {
    if (task_code(t) == text || task_name(t) == text) return t;
  }
  return std::nullopt;
}

enum class AnswerFormat { kSingleLetter, kExactPhrase, kFrameList };

constexpr std::string_view format_name(AnswerFormat f) {
  switch (f) {
    case AnswerFormat::kSingleLetter: return "single_letter";
    case AnswerFormat::kExactPhrase: return "exact_phrase";
    case AnswerFormat::kFrameList: return "frame_list";
  }
  return "";
}

inline std::optional<AnswerFormat> parse_format(std::string_view text) {
  for (auto f : {AnswerFormat::kSingleLetter, AnswerFormat::kExactPhrase, AnswerFormat::kFrameList}) {
    if (format_name(f) == text) return f;
  }
  return std::nullopt;
}

struct ObjectRef {
  std::string track_id;
  Category category = Category::kCar;
};

struct QAItem {
  std::string id;
  std::string scene_id;
  Task task = Task::kExactAction;
  std::optional<ObjectRef> object;  // empty: the ego vehicle
  std::string question;
  AnswerFormat format = AnswerFormat::kSingleLetter;
  std::vector<std::string> options;  // option texts for letters A, B, ...
  std::string answer;                // letter or phrase
  std::vector<int> answer_frames;    // frame_list answers
  std::optional<int> segment_index;  // segment-level tasks only
  int frame_count = 0;               // frames in the scene

  bool is_ego() const { return !object.has_value(); }
};

inline constexpr std::string_view kLetterInstruction =
    "Respond with exactly one letter corresponding to the correct option.";
inline constexpr std::string_view kFrameListInstruction =
    "Respond with an explicit list of all frame numbers, enumerating each value individually, "
    "without summarizing as a range.";

inline char letter_at(std::size_t i) { return static_cast<char>('A' + i); }

inline std::string phrase_list_instruction() {
  std::string out = "Respond with exactly one full phrase from the following list: ";
  for (std::size_t i = 0; i < kAllActions.size(); ++i) {
    if (i > 0) out += ", ";
    out += fmt::format("'{}'", display_name(kAllActions[i]));
  }
  return out;
}

/// "A. x. B. y." rendering appended after the instruction sentence.
inline std::string render_options(const std::vector<std::string>& options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i > 0) out += ' ';
    out += fmt::format("{}. {}.", letter_at(i), options[i]);
  }
  return out;
}

inline std::string multiple_choice_text(std::string_view stem, const std::vector<std::string>& options) {
  return fmt::format("{} {} {}", stem, kLetterInstruction, render_options(options));
}

/// Subject noun phrase of a question.
inline std::string subject_of(const std::optional<ObjectRef>& object) {
  return object ? fmt::format("the {}", category_name(object->category)) : std::string("the ego vehicle");
}

inline std::string segment_subject(const std::optional<ObjectRef>& object) {
  return object ? fmt::format("the {} visible", category_name(object->category))
                : std::string("the ego vehicle");
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// -- rendering with explicit choices ----------------------------------------

inline std::string exact_action_question(const std::optional<ObjectRef>& object) {
  return fmt::format("What best describes the motion of {} in this video segment? {}", segment_subject(object),
                     phrase_list_instruction());
}

inline std::string mc_action_stem(const std::optional<ObjectRef>& object) {
  return fmt::format("What is the motion of {} in this video segment?", segment_subject(object));
}

inline std::string duration_stem(bool longest) {
  return fmt::format("Which action did the ego vehicle spend the {} time doing?", longest ? "most" : "least");
}

inline std::string ordering_stem(const std::optional<ObjectRef>& object) {
  return fmt::format("Which of the following represents the correct temporal order of motions for {}?",
                     subject_of(object));
}

inline std::string sequence_text(const std::vector<Action>& seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i > 0) out += "; ";
    out += display_name(seq[i]);
  }
  return out;
}

inline std::string action_localization_question(const std::optional<ObjectRef>& object, Action action) {
  return fmt::format("In which frames is {} doing action '{}'? {}", subject_of(object),
                     lowercase(display_name(action)), kFrameListInstruction);
}

inline std::string relative_stem(bool earlier) {
  return fmt::format("Which ego vehicle event happened {} in the video?", earlier ? "earlier" : "later");
}

inline std::string object_localization_question(Category category) {
  return fmt::format("In which frames are there any {} visible to the ego vehicle? {}", category_plural(category),
                     kFrameListInstruction);
}

/// Letter of `correct` within an explicit option list.
inline std::string answer_letter(const std::vector<std::string>& options, std::string_view correct) {
  const auto it = std::find(options.begin(), options.end(), correct);
  if (it == options.end()) throw DomainError("correct answer missing from options");
  return std::string(1, letter_at(static_cast<std::size_t>(it - options.begin())));
}

// -- logical checks ---------------------------------------------------------

/// A segment spanning every frame of the scene.
inline Segment whole_scene(const SceneBundle& bundle) {
  Segment seg;
  seg.segment_index = 0;
  for (int i = 0; i < bundle.frame_count(); ++i) seg.frame_indices.push_back(i);
  return seg;
}

inline Segment segment_from_labels(const SegmentLabels& labels) {
  Segment seg;
  seg.segment_index = labels.segment_index;
  for (int f = labels.first_frame; f <= labels.last_frame; ++f) seg.frame_indices.push_back(f);
  return seg;
}

/// True iff exactly one range-filtered track of the category appears over the span.
inline bool check_unique_reference(const SceneBundle& bundle, const Segment& span, Category category,
                                   double range_limit) {
  int count = 0;
  for (const auto& id : filter_vehicles(bundle, span, range_limit)) {
    if (bundle.find_track(id)->category == category) ++count;
  }
  return count == 1;
}

/// Invariant violations of a single item; empty when well-formed.
inline std::vector<std::string> validate_item(const QAItem& item) {
  std::vector<std::string> problems;
  switch (item.format) {
    case AnswerFormat::kSingleLetter: {
      if (item.options.size() < 2 || item.options.size() > 4) problems.push_back("needs 2-4 options");
      if (item.answer.size() != 1 || item.answer[0] < 'A' ||
          item.answer[0] >= letter_at(item.options.size())) {
        problems.push_back("answer letter not among options");
      }
      std::set<std::string> distinct(item.options.begin(), item.options.end());
      if (distinct.size() != item.options.size()) problems.push_back("duplicate options");
      break;
    }
    case AnswerFormat::kExactPhrase: {
      const bool known = std::any_of(kAllActions.begin(), kAllActions.end(),
                                     [&](Action a) { return display_name(a) == item.answer; });
      if (!known) problems.push_back("answer is not an action phrase");
      break;
    }
    case AnswerFormat::kFrameList: {
      const auto& f = item.answer_frames;
      if (f.empty()) problems.push_back("empty frame list");
      if (!std::is_sorted(f.begin(), f.end()) || std::adjacent_find(f.begin(), f.end()) != f.end()) {
        problems.push_back("frame list not sorted and unique");
      }
      if (!f.empty() && (f.front() < 0 || f.back() >= item.frame_count)) problems.push_back("frame out of scene");
      break;
    }
  }
  const bool ego_only = item.task == Task::kActionDuration || item.task == Task::kRelativeLocalization;
  if (ego_only && !item.is_ego()) problems.push_back("task is ego-only");
  if (item.task == Task::kObjectLocalization && item.is_ego()) problems.push_back("task is non-ego only");
  const bool segment_task = item.task == Task::kExactAction || item.task == Task::kMultipleChoiceAction;
  if (segment_task != item.segment_index.has_value()) problems.push_back("segment index presence mismatch");
  return problems;
}

// -- generators -------------------------------------------------------------

enum class SegmentQuestionMode { kExact, kMultipleChoice };

struct QAContext {
  const SceneAnnotations& annotations;
  const SceneBundle& bundle;
  double range_limit = 50.0;
};

inline std::optional<ObjectRef> object_for(const SceneBundle& bundle, const std::string& track_id) {
  if (track_id.empty()) return std::nullopt;
  const ObjectTrack* t = bundle.find_track(track_id);
  if (t == nullptr) throw NotFoundError("track " + track_id + " not in scene " + bundle.scene_id);
  return ObjectRef{t->track_id, t->category};
}

inline QAItem base_item(const QAContext& ctx, Task task, const std::string& track_id) {
  QAItem item;
  item.scene_id = ctx.bundle.scene_id;
  item.task = task;
  item.object = object_for(ctx.bundle, track_id);
  item.frame_count = ctx.bundle.frame_count();
  return item;
}

/// Shuffles `options` (first entry correct) and returns the correct letter.
inline std::string shuffle_options(std::vector<std::string>& options, Rng& rng) {
  const std::string correct = options.front();
  rng.shuffle(options);
  return answer_letter(options, correct);
}

/// Segment-level action recognition. Empty track id targets the ego vehicle.
inline std::optional<QAItem> generate_segment_action_qa(const QAContext& ctx, const SegmentLabels& seg,
                                                        const std::string& track_id, SegmentQuestionMode mode,
                                                        Rng& rng) {
  const auto label = label_for(seg, track_id);
  if (!label) return std::nullopt;
  Task task = mode == SegmentQuestionMode::kExact ? Task::kExactAction : Task::kMultipleChoiceAction;
  QAItem item = base_item(ctx, task, track_id);
  if (item.object &&
      !check_unique_reference(ctx.bundle, segment_from_labels(seg), item.object->category, ctx.range_limit)) {
    return std::nullopt;
  }
  item.segment_index = seg.segment_index;
  if (mode == SegmentQuestionMode::kExact) {
    item.format = AnswerFormat::kExactPhrase;
    item.question = exact_action_question(item.object);
    item.answer = std::string(display_name(*label));
    return item;
  }
  std::vector<Action> wrong;
  for (Action a : kAllActions) {
    if (a != *label) wrong.push_back(a);
  }
  rng.shuffle(wrong);
  std::vector<std::string> options{std::string(display_name(*label))};
  for (std::size_t i = 0; i < 3; ++i) options.emplace_back(display_name(wrong[i]));
  item.format = AnswerFormat::kSingleLetter;
  item.answer = shuffle_options(options, rng);
  item.options = std::move(options);
  item.question = multiple_choice_text(mc_action_stem(item.object), item.options);
  return item;
}

/// Total frames per action over a timeline.
inline std::map<Action, int> action_durations(const Timeline& timeline) {
  std::map<Action, int> out;
  for (const auto& run : timeline) out[run.action] += run.length();
  return out;
}

/// Ego-only "which action lasted longest/shortest". Skips on ties at the extremum.
inline std::optional<QAItem> generate_duration_qa(const QAContext& ctx, Rng& rng) {
  const Timeline timeline = derive_timeline(ctx.annotations);
  const auto durations = action_durations(timeline);
  if (durations.size() < 2) return std::nullopt;

  auto extremum = [&](bool longest) -> std::optional<Action> {
    std::optional<Action> best;
    int best_len = 0;
    bool tie = false;
    for (const auto& [a, len] : durations) {
      if (!best || (longest ? len > best_len : len < best_len)) {
        best = a;
        best_len = len;
        tie = false;
      } else if (len == best_len) {
        tie = true;
      }
    }
    return tie ? std::nullopt : best;
  };

  bool longest = rng.below(2) == 0;
  auto correct = extremum(longest);
  if (!correct) {
    longest = !longest;
    correct = extremum(longest);
  }
  if (!correct) return std::nullopt;

  std::vector<Action> distractors;
  for (Action a : first_occurrence_order(timeline)) {
    if (a != *correct) distractors.push_back(a);
  }
  rng.shuffle(distractors);
  if (distractors.size() > 3) distractors.resize(3);

  QAItem item = base_item(ctx, Task::kActionDuration, {});
  std::vector<std::string> options{std::string(display_name(*correct))};
  for (Action a : distractors) options.emplace_back(display_name(a));
  item.format = AnswerFormat::kSingleLetter;
  item.answer = shuffle_options(options, rng);
  item.options = std::move(options);
  item.question = multiple_choice_text(duration_stem(longest), item.options);
  return item;
}

/// Candidate wrong orderings: permutations first, then drop-one variants.
inline std::vector<std::vector<Action>> ordering_distractors(const std::vector<Action>& truth, Rng& rng) {
  std::vector<std::vector<Action>> out;
  if (truth.size() <= 5) {
    std::vector<std::size_t> idx(truth.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    while (std::next_permutation(idx.begin(), idx.end())) {
      std::vector<Action> perm;
      for (auto i : idx) perm.push_back(truth[i]);
      out.push_back(std::move(perm));
    }
  } else {
    std::set<std::vector<Action>> seen{truth};
    for (int attempt = 0; attempt < 200 && out.size() < 3; ++attempt) {
      auto perm = truth;
      rng.shuffle(perm);
      if (seen.insert(perm).second) out.push_back(std::move(perm));
    }
  }
  if (out.size() < 3 && truth.size() >= 3) {
    for (std::size_t drop = 0; drop < truth.size(); ++drop) {
      auto shorter = truth;
      shorter.erase(shorter.begin() + static_cast<std::ptrdiff_t>(drop));
      if (std::find(out.begin(), out.end(), shorter) == out.end()) out.push_back(std::move(shorter));
    }
  }
  rng.shuffle(out);
  if (out.size() > 3) out.resize(3);
  return out;
}

inline std::optional<QAItem> generate_ordering_qa(const QAContext& ctx, const std::string& track_id, Rng& rng) {
  QAItem item = base_item(ctx, Task::kTemporalOrdering, track_id);
  if (item.object && !check_unique_reference(ctx.bundle, whole_scene(ctx.bundle), item.object->category,
                                             ctx.range_limit)) {
    return std::nullopt;
  }
  const auto truth = first_occurrence_order(derive_timeline(ctx.annotations, track_id));
  if (truth.size() < 2) return std::nullopt;
  std::vector<std::string> options{sequence_text(truth)};
  for (const auto& alt : ordering_distractors(truth, rng)) options.push_back(sequence_text(alt));
  item.format = AnswerFormat::kSingleLetter;
  item.answer = shuffle_options(options, rng);
  item.options = std::move(options);
  item.question = multiple_choice_text(ordering_stem(item.object), item.options);
  return item;
}

inline std::optional<QAItem> generate_action_localization_qa(const QAContext& ctx, const std::string& track_id,
                                                             Action action) {
  QAItem item = base_item(ctx, Task::kActionLocalization, track_id);
  if (item.object && !check_unique_reference(ctx.bundle, whole_scene(ctx.bundle), item.object->category,
                                             ctx.range_limit)) {
    return std::nullopt;
  }
  for (const auto& run : derive_timeline(ctx.annotations, track_id)) {
    if (run.action != action) continue;
    for (int f = run.start_frame; f <= run.end_frame; ++f) {
      item.answer_frames.push_back(ctx.bundle.frames[static_cast<std::size_t>(f)].index);
    }
  }
  if (item.answer_frames.empty()) return std::nullopt;
  std::sort(item.answer_frames.begin(), item.answer_frames.end());
  item.answer_frames.erase(std::unique(item.answer_frames.begin(), item.answer_frames.end()),
                           item.answer_frames.end());
  item.format = AnswerFormat::kFrameList;
  item.question = action_localization_question(item.object, action);
  return item;
}

/// Ego-only: which of two actions first occurred earlier (or later).
inline std::optional<QAItem> generate_relative_localization_qa(const QAContext& ctx, Rng& rng) {
  const Timeline timeline = derive_timeline(ctx.annotations);
  const auto order = first_occurrence_order(timeline);
  if (order.size() < 2) return std::nullopt;
  std::vector<std::size_t> picks(order.size());
  for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
  rng.shuffle(picks);
  const std::size_t i = std::min(picks[0], picks[1]);
  const std::size_t j = std::max(picks[0], picks[1]);
  const bool earlier = rng.below(2) == 0;
  const Action correct = earlier ? order[i] : order[j];
  const Action other = earlier ? order[j] : order[i];

  QAItem item = base_item(ctx, Task::kRelativeLocalization, {});
  std::vector<std::string> options{std::string(display_name(correct)), std::string(display_name(other))};
  item.format = AnswerFormat::kSingleLetter;
  item.answer = shuffle_options(options, rng);
  item.options = std::move(options);
  item.question = multiple_choice_text(relative_stem(earlier), item.options);
  return item;
}

/// Frames where at least one range-filtered, front-visible track of the category exists.
inline std::vector<int> category_presence(const SceneBundle& bundle, Category category, double range_limit) {
  std::vector<int> frames;
  for (int pos = 0; pos < bundle.frame_count(); ++pos) {
    for (const auto& track : bundle.tracks) {
      if (track.category == category && in_range_and_visible(bundle, track, pos, range_limit)) {
        frames.push_back(bundle.frames[static_cast<std::size_t>(pos)].index);
        break;
      }
    }
  }
  return frames;
}

inline std::optional<QAItem> generate_object_localization_qa(const QAContext& ctx, Category category) {
  auto frames = category_presence(ctx.bundle, category, ctx.range_limit);
  if (frames.empty()) return std::nullopt;
  QAItem item = base_item(ctx, Task::kObjectLocalization, {});
  item.object = ObjectRef{{}, category};  // about the category, not one track
  item.format = AnswerFormat::kFrameList;
  item.answer_frames = std::move(frames);
  item.question = object_localization_question(category);
  return item;
}

// -- whole-scene generation -------------------------------------------------

struct GenerationFilter {
  std::set<Task> tasks{kAllTasks.begin(), kAllTasks.end()};
  bool ego = true;
  bool non_ego = true;
};

/// Every template applied to one scene. Each (scene, task) pair draws from its own
/// seeded stream, so scenes may be generated in any order or in parallel.
inline std::vector<QAItem> generate_scene_qa(const SceneAnnotations& ann, const SceneBundle& bundle,
                                             double range_limit, std::uint64_t seed,
                                             const GenerationFilter& filter = {}) {
  const QAContext ctx{ann, bundle, range_limit};
  std::vector<QAItem> items;
  auto stream = [&](Task t) { return Rng(derive_seed(seed, bundle.scene_id, task_code(t))); };
  auto wanted = [&](Task t, bool ego) { return filter.tasks.contains(t) && (ego ? filter.ego : filter.non_ego); };
  auto emit = [&](std::optional<QAItem> item) {
    if (item) items.push_back(std::move(*item));
  };

  // Labeled tracks in scene order.
  std::vector<std::string> labeled_tracks;
  for (const auto& track : bundle.tracks) {
    for (const auto& seg : ann.segments) {
      if (seg.tracks.contains(track.track_id)) {
        labeled_tracks.push_back(track.track_id);
        break;
      }
    }
  }

  for (auto [task, mode] : {std::pair{Task::kExactAction, SegmentQuestionMode::kExact},
                            std::pair{Task::kMultipleChoiceAction, SegmentQuestionMode::kMultipleChoice}}) {
    Rng rng = stream(task);
    for (const auto& seg : ann.segments) {
      if (wanted(task, true)) emit(generate_segment_action_qa(ctx, seg, {}, mode, rng));
      if (!wanted(task, false)) continue;
      for (const auto& [id, label] : seg.tracks) emit(generate_segment_action_qa(ctx, seg, id, mode, rng));
    }
  }
  if (wanted(Task::kActionDuration, true)) {
    Rng rng = stream(Task::kActionDuration);
    emit(generate_duration_qa(ctx, rng));
  }
  {
    Rng rng = stream(Task::kTemporalOrdering);
    if (wanted(Task::kTemporalOrdering, true)) emit(generate_ordering_qa(ctx, {}, rng));
    if (wanted(Task::kTemporalOrdering, false)) {
      for (const auto& id : labeled_tracks) emit(generate_ordering_qa(ctx, id, rng));
    }
  }
  if (wanted(Task::kActionLocalization, true)) {
    for (Action a : first_occurrence_order(derive_timeline(ann))) {
      emit(generate_action_localization_qa(ctx, {}, a));
    }
  }
  if (wanted(Task::kActionLocalization, false)) {
    for (const auto& id : labeled_tracks) {
      for (Action a : first_occurrence_order(derive_timeline(ann, id))) {
        emit(generate_action_localization_qa(ctx, id, a));
      }
    }
  }
  if (wanted(Task::kRelativeLocalization, true)) {
    Rng rng = stream(Task::kRelativeLocalization);
    emit(generate_relative_localization_qa(ctx, rng));
  }
  if (wanted(Task::kObjectLocalization, false)) {
    for (Category c : kAllCategories) emit(generate_object_localization_qa(ctx, c));
  }

  std::map<Task, int> counters;
  for (auto& item : items) {
    item.id = fmt::format("{}/{}/{:03}", item.scene_id, task_code(item.task), counters[item.task]++);
    const auto problems = validate_item(item);
    if (!problems.empty()) throw Error("qa_invariant", item.id + ": " + problems.front());
  }
  return items;
}

// -- serialization ----------------------------------------------------------

inline nlohmann::json to_json(const QAItem& item) {
  nlohmann::json j = {{"id", item.id},
                      {"scene_id", item.scene_id},
                      {"task", std::string(task_name(item.task))},
                      {"question", item.question},
                      {"answer_format", std::string(format_name(item.format))},
                      {"frame_count", item.frame_count}};
  if (item.object) {
    j["target"] = {{"track_id", item.object->track_id}, {"category", std::string(category_name(item.object->category))}};
  } else {
    j["target"] = "ego";
  }
  if (!item.options.empty()) {
    nlohmann::json opts = nlohmann::json::object();
    for (std::size_t i = 0; i < item.options.size(); ++i) opts[std::string(1, letter_at(i))] = item.options[i];
    j["options"] = std::move(opts);
  }
  if (item.format == AnswerFormat::kFrameList) {
    j["ground_truth"] = item.answer_frames;
  } else {
    j["ground_truth"] = item.answer;
  }
  if (item.segment_index) j["segment_index"] = *item.segment_index;
  return j;
}

inline QAItem qa_item_from_json(const nlohmann::json& j) {
  QAItem item;
  try {
    item.id = j.at("id").get<std::string>();
    item.scene_id = j.at("scene_id").get<std::string>();
    const auto task = parse_task(j.at("task").get<std::string>());
    if (!task) throw DomainError(item.id + ": unknown task");
    item.task = *task;
    item.question = j.at("question").get<std::string>();
    const auto fmt_ = parse_format(j.at("answer_format").get<std::string>());
    if (!fmt_) throw DomainError(item.id + ": unknown answer format");
    item.format = *fmt_;
    item.frame_count = j.value("frame_count", 0);
    const auto& target = j.at("target");
    if (!(target.is_string() && target.get<std::string>() == "ego")) {
      const auto cat = parse_category(target.at("category").get<std::string>());
      if (!cat) throw DomainError(item.id + ": unknown category");
      item.object = ObjectRef{target.value("track_id", std::string()), *cat};
    }
    if (j.contains("options")) {
      for (std::size_t i = 0; i < j["options"].size(); ++i) {
        item.options.push_back(j["options"].at(std::string(1, letter_at(i))).get<std::string>());
      }
    }
    if (item.format == AnswerFormat::kFrameList) {
      item.answer_frames = j.at("ground_truth").get<std::vector<int>>();
    } else {
      item.answer = j.at("ground_truth").get<std::string>();
    }
    if (j.contains("segment_index")) item.segment_index = j["segment_index"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed QA item: ") + e.what());
  }
  return item;
}

inline std::string serialize_qa(const std::vector<QAItem>& items) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& item : items) arr.push_back(to_json(item));
  return arr.dump(2) + "\n";
}

inline std::vector<QAItem> parse_qa(const std::string& text) {
  std::vector<QAItem> items;
  nlohmann::json arr;
  try {
    arr = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DomainError(std::string("QA file is not JSON: ") + e.what());
  }
  for (const auto& j : arr) items.push_back(qa_item_from_json(j));
  return items;
}

}  // namespace tad
