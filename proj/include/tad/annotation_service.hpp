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

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <httplib.h>

#include "tad/annotations.hpp"
#include "tad/scene_json.hpp"
#include "tad/mock_server.hpp"
#include "tad/motion.hpp"
#include "tad/qa.hpp"
#include "tad/segmenter.hpp"

namespace tad {

enum class LabelSource { kAuto, kSuggested, kHuman };
enum class Verdict { kAccepted, kRejected, kEdited };

constexpr std::string_view source_name(LabelSource s) {
  switch (s) {
    case LabelSource::kAuto: return "auto";
    case LabelSource::kSuggested: return "suggested";
    case LabelSource::kHuman: return "human";
  }
  return "";
}

constexpr std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kAccepted: return "accepted";
    case Verdict::kRejected: return "rejected";
    case Verdict::kEdited: return "edited";
  }
  return "";
}

inline std::optional<LabelSource> parse_source(std::string_view s) {
  for (auto v : {LabelSource::kAuto, LabelSource::kSuggested, LabelSource::kHuman}) {
    if (source_name(v) == s) return v;
  }
  return std::nullopt;
}

inline std::optional<Verdict> parse_verdict(std::string_view s) {
  for (auto v : {Verdict::kAccepted, Verdict::kRejected, Verdict::kEdited}) {
    if (verdict_name(v) == s) return v;
  }
  return std::nullopt;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

struct LabelRecord {
  std::string scene_id;
  int segment_index = 0;
  std::string target = "ego";  // "ego" or a track id
  Action label = Action::kStraightConstantSpeed;
  LabelSource source = LabelSource::kHuman;
  long revision = 0;
  std::string annotator;
  std::string timestamp;

  std::string key() const { return fmt::format("{}|{}|{}", scene_id, segment_index, target); }
};

struct ReviewRecord {
  std::string qa_id;
  Verdict verdict = Verdict::kAccepted;
  nlohmann::json edited_answer;  // null unless edited
  std::string annotator;
  std::string timestamp;
  long revision = 0;
};

inline nlohmann::json to_json(const LabelRecord& r) {
  return {{"scene_id", r.scene_id},   {"segment_index", r.segment_index},
          {"target", r.target},       {"label", std::string(display_name(r.label))},
          {"source", std::string(source_name(r.source))}, {"revision", r.revision},
          {"annotator", r.annotator}, {"timestamp", r.timestamp}};
}

inline LabelRecord label_record_from_json(const nlohmann::json& j) {
  LabelRecord r;
  r.scene_id = j.at("scene_id").get<std::string>();
  r.segment_index = j.at("segment_index").get<int>();
  r.target = j.at("target").get<std::string>();
  const auto label = parse_action(j.at("label").get<std::string>());
  const auto source = parse_source(j.at("source").get<std::string>());
  if (!label || !source) throw DomainError("bad label record");
  r.label = *label;
  r.source = *source;
  r.revision = j.at("revision").get<long>();
  r.annotator = j.value("annotator", "");
  r.timestamp = j.value("timestamp", "");
  return r;
}

inline nlohmann::json to_json(const ReviewRecord& r) {
  return {{"qa_id", r.qa_id},         {"verdict", std::string(verdict_name(r.verdict))},
          {"edited_answer", r.edited_answer}, {"annotator", r.annotator},
          {"timestamp", r.timestamp}, {"revision", r.revision}};
}

inline ReviewRecord review_record_from_json(const nlohmann::json& j) {
  ReviewRecord r;
  r.qa_id = j.at("qa_id").get<std::string>();
  const auto v = parse_verdict(j.at("verdict").get<std::string>());
  if (!v) throw DomainError("bad review record");
  r.verdict = *v;
  r.edited_answer = j.value("edited_answer", nlohmann::json());
  r.annotator = j.value("annotator", "");
  r.timestamp = j.value("timestamp", "");
  r.revision = j.at("revision").get<long>();
  return r;
}

/// Immutable view of the store.
struct StoreState {
  std::map<std::string, LabelRecord> latest;     // newest record per key
  std::map<std::string, LabelRecord> effective;  // human records outrank later machine ones
  std::map<std::string, ReviewRecord> reviews;   // newest per QA id
  std::size_t label_lines = 0;
  std::size_t review_lines = 0;

  void apply(const LabelRecord& r) {
    const auto key = r.key();
    latest[key] = r;
    auto it = effective.find(key);
    if (it == effective.end() || r.source == LabelSource::kHuman || it->second.source != LabelSource::kHuman) {
      effective[key] = r;
    }
    ++label_lines;
  }

  void apply(const ReviewRecord& r) {
    reviews[r.qa_id] = r;
    ++review_lines;
  }
};

/// Folds label records in revision order.
inline StoreState replay_labels(std::vector<LabelRecord> records) {
  std::stable_sort(records.begin(), records.end(), [](const LabelRecord& a, const LabelRecord& b) {
    return std::pair(a.key(), a.revision) < std::pair(b.key(), b.revision);
  });
  StoreState s;
  for (const auto& r : records) s.apply(r);
  return s;
}

namespace detail {

/// Append-only JSON-lines file; every append is fsynced before returning.
class JsonlLog {
 public:
  explicit JsonlLog(std::filesystem::path path) : path_(std::move(path)) {}
  ~JsonlLog() { close(); }
  JsonlLog(const JsonlLog&) = delete;
  JsonlLog& operator=(const JsonlLog&) = delete;

  /// Valid lines; a torn final line is cut off the file.
  std::vector<nlohmann::json> load() {
    std::vector<nlohmann::json> out;
    if (!std::filesystem::exists(path_)) return out;
    const auto text = read_text_file(path_);
    std::size_t pos = 0;
    std::size_t good_end = 0;
    while (pos < text.size()) {
      const auto end = text.find('\n', pos);
      if (end == std::string::npos) break;  // unterminated tail
      const auto line = text.substr(pos, end - pos);
      try {
        out.push_back(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception&) {
        if (text.find('\n', end + 1) != std::string::npos) {
          throw Error("store", fmt::format("{}: corrupt record at byte {}", path_.string(), pos));
        }
        break;
      }
      good_end = end + 1;
      pos = end + 1;
    }
    if (good_end < text.size()) std::filesystem::resize_file(path_, good_end);
    return out;
  }

  void append(const nlohmann::json& j) {
    open();
    const auto line = j.dump() + "\n";
    std::size_t done = 0;
    while (done < line.size()) {
      const auto n = ::write(fd_, line.data() + done, line.size() - done);
      if (n < 0) throw Error("store", "write failed: " + path_.string());
      done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw Error("store", "fsync failed: " + path_.string());
  }

  /// Atomically replaces the file with `records`.
  void rewrite(const std::vector<nlohmann::json>& records) {
    close();
    std::string text;
    for (const auto& r : records) text += r.dump() + "\n";
    const auto tmp = path_.string() + ".compact";
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw Error("store", "cannot write " + tmp);
    const bool ok = ::write(fd, text.data(), text.size()) == static_cast<ssize_t>(text.size()) && ::fsync(fd) == 0;
    ::close(fd);
    if (!ok) throw Error("store", "compaction write failed: " + tmp);
    std::filesystem::rename(tmp, path_);
  }

 private:
  void open() {
    if (fd_ >= 0) return;
    fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
    if (fd_ < 0) throw Error("store", "cannot open " + path_.string());
  }
  void close() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

  std::filesystem::path path_;
  int fd_ = -1;
};

}  // namespace detail

/// Durable label and review store. Writes are serialized; reads use immutable snapshots.
class LabelStore {
 public:
  explicit LabelStore(const std::filesystem::path& dir, std::size_t compact_after = 4096)
      : labels_(dir / "labels.jsonl"), reviews_(dir / "reviews.jsonl"), compact_after_(compact_after) {
    std::filesystem::create_directories(dir);
    StoreState s;
    std::vector<LabelRecord> records;
    for (const auto& j : labels_.load()) records.push_back(label_record_from_json(j));
    s = replay_labels(std::move(records));
    for (const auto& j : reviews_.load()) s.apply(review_record_from_json(j));
    snapshot_ = std::make_shared<const StoreState>(std::move(s));
  }

  std::shared_ptr<const StoreState> snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snapshot_;
  }

  struct PutResult {
    bool conflict = false;
    LabelRecord record;  // the stored record, or the current one on conflict
    long current_revision = 0;
  };

  PutResult put_label(LabelRecord rec, long base_revision) {
    std::lock_guard lock(write_mu_);
    auto state = std::make_shared<StoreState>(*snapshot());
    auto it = state->latest.find(rec.key());
    const long current = it == state->latest.end() ? 0 : it->second.revision;
    if (base_revision != current) return {true, it == state->latest.end() ? rec : it->second, current};
    rec.revision = current + 1;
    if (rec.timestamp.empty()) rec.timestamp = utc_timestamp();
    labels_.append(to_json(rec));
    state->apply(rec);
    publish(state);
    if (state->label_lines > compact_after_ && state->label_lines > 2 * state->latest.size()) compact_locked();
    return {false, rec, rec.revision};
  }

  ReviewRecord put_review(ReviewRecord rec) {
    std::lock_guard lock(write_mu_);
    auto state = std::make_shared<StoreState>(*snapshot());
    auto it = state->reviews.find(rec.qa_id);
    rec.revision = (it == state->reviews.end() ? 0 : it->second.revision) + 1;
    if (rec.timestamp.empty()) rec.timestamp = utc_timestamp();
    reviews_.append(to_json(rec));
    state->apply(rec);
    publish(state);
    return rec;
  }

  /// Rewrites both logs keeping only what replay needs.
  void compact() {
    std::lock_guard lock(write_mu_);
    compact_locked();
  }

 private:
  void publish(std::shared_ptr<StoreState> s) {
    std::lock_guard lock(snap_mu_);
    snapshot_ = std::move(s);
  }

  void compact_locked() {
    const auto s = snapshot();
    std::vector<LabelRecord> keep;
    for (const auto& [key, latest] : s->latest) {
      const auto& eff = s->effective.at(key);
      if (eff.revision != latest.revision) keep.push_back(eff);
      keep.push_back(latest);
    }
    std::vector<nlohmann::json> label_lines;
    for (const auto& r : keep) label_lines.push_back(to_json(r));
    labels_.rewrite(label_lines);
    std::vector<nlohmann::json> review_lines;
    for (const auto& [id, r] : s->reviews) review_lines.push_back(to_json(r));
    reviews_.rewrite(review_lines);
    auto fresh = std::make_shared<StoreState>(replay_labels(keep));
    fresh->reviews = s->reviews;
    fresh->review_lines = s->reviews.size();
    publish(fresh);
  }

  detail::JsonlLog labels_;
  detail::JsonlLog reviews_;
  std::size_t compact_after_;
  std::mutex write_mu_;
  mutable std::mutex snap_mu_;
  std::shared_ptr<const StoreState> snapshot_;
};

/// Export: the scene's segment skeleton filled with the effective labels.
inline SceneAnnotations export_annotations(const StoreState& state, const std::string& scene_id,
                                           const std::vector<Segment>& segments) {
  auto ann = annotations_for(scene_id, segments);
  for (const auto& [key, r] : state.effective) {
    if (r.scene_id != scene_id) continue;
    for (auto& seg : ann.segments) {
      if (seg.segment_index != r.segment_index) continue;
      if (r.target == "ego") seg.ego = r.label;
      else seg.tracks[r.target] = r.label;
    }
  }
  return ann;
}

// -- HTTP service ---------------------------------------------------------------

struct ServiceOptions {
  std::filesystem::path store_dir = "store";
  std::filesystem::path media_dir;  // served under /media/
  std::filesystem::path ui_dir;     // static UI assets served at /
  std::string token;                // required in X-TAD-Token when non-empty
  std::string cors_origin = "*";
  SegmentationParams segments;
  Thresholds motion;
};

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

inline HttpReply unprocessable(const std::string& field, const std::string& message) {
  return {422, {{"error", message}, {"field", field}}};
}

class AnnotationService {
 public:
  AnnotationService(std::vector<SceneBundle> scenes, std::vector<QAItem> qa, ServiceOptions opt)
      : opt_(std::move(opt)), store_(opt_.store_dir) {
    for (auto& b : scenes) {
      Scene s;
      s.segments = prepare_segments(b, opt_.segments, opt_.motion);
      for (const auto& seg : s.segments) {
        try {
          s.ego_suggestions.push_back(classify_motion(segment_poses(b, seg), opt_.motion));
        } catch (const Error&) {
          s.ego_suggestions.push_back(std::nullopt);
        }
      }
      s.bundle = std::move(b);
      scenes_.emplace(s.bundle.scene_id, std::move(s));
    }
    for (auto& item : qa) {
      qa_index_[item.id] = qa_.size();
      qa_.push_back(std::move(item));
    }
    routes();
  }

  ~AnnotationService() { stop(); }
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  int start(int port = 0, const std::string& host = "127.0.0.1") {
    std::lock_guard lock(life_mu_);
    if (thread_.joinable()) return port_;
    port_ = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (port_ < 0) throw Error("startup", fmt::format("cannot bind {}:{}", host, port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void run(int port, const std::string& host = "0.0.0.0") {
    start(port, host);
    std::unique_lock lock(life_mu_);
    stopped_cv_.wait(lock, [this] { return stopping_; });
  }

  void stop() {
    std::lock_guard lock(life_mu_);
    stopping_ = true;
    stopped_cv_.notify_all();
    if (!thread_.joinable()) return;
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return fmt::format("http://127.0.0.1:{}", port_); }
  LabelStore& store() { return store_; }

  // -- operations behind the routes ---------------------------------------------

  nlohmann::json scenes_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, s] : scenes_) {
      out.push_back({{"scene_id", id},
                     {"frame_count", s.bundle.frame_count()},
                     {"segment_count", s.segments.size()},
                     {"duration", s.bundle.duration()}});
    }
    return out;
  }

  HttpReply segment_json(const std::string& scene_id, int k) const {
    auto it = scenes_.find(scene_id);
    if (it == scenes_.end()) return {404, {{"error", "unknown scene " + scene_id}}};
    const auto& s = it->second;
    if (k < 0 || k >= static_cast<int>(s.segments.size())) return {404, {{"error", fmt::format("no segment {}", k)}}};
    const auto& seg = s.segments[static_cast<std::size_t>(k)];
    const auto& b = s.bundle;
    const auto& origin = b.ego_poses[static_cast<std::size_t>(seg.first_frame())];
    auto local = [&](const Vec3& p) {
      const auto v = to_local_frame(p - origin.translation, origin.rotation);
      return nlohmann::json::array({v.x, v.y});
    };

    nlohmann::json frames = nlohmann::json::array();
    nlohmann::json ego_line = nlohmann::json::array();
    for (int pos : seg.frame_indices) {
      const auto& f = b.frames[static_cast<std::size_t>(pos)];
      frames.push_back({{"idx", f.index}, {"t", f.timestamp}, {"image_url", media_url(f.image_path)}});
      ego_line.push_back(local(b.ego_poses[static_cast<std::size_t>(pos)].translation));
    }
    nlohmann::json tracks = nlohmann::json::array();
    nlohmann::json track_lines = nlohmann::json::object();
    for (const auto& id : seg.tracks_in_range) {
      const ObjectTrack* t = b.find_track(id);
      nlohmann::json line = nlohmann::json::array();
      for (const auto* st : states_in_segment(b, seg, *t)) line.push_back(local(st->center));
      track_lines[id] = std::move(line);
      nlohmann::json entry = {{"track_id", id}, {"category", std::string(category_name(t->category))}};
      auto sug = seg.suggestions.find(id);
      entry["suggested_label"] = sug == seg.suggestions.end() ? nlohmann::json() : nlohmann::json(std::string(display_name(sug->second.label)));
      entry["auto"] = sug != seg.suggestions.end() && sug->second.automatic;
      tracks.push_back(std::move(entry));
    }
    const auto snap = store_.snapshot();
    auto current = [&](const std::string& target) -> nlohmann::json {
      auto e = snap->effective.find(fmt::format("{}|{}|{}", scene_id, k, target));
      auto l = snap->latest.find(fmt::format("{}|{}|{}", scene_id, k, target));
      if (e == snap->effective.end()) return nullptr;
      auto j = to_json(e->second);
      j["revision"] = l->second.revision;
      return j;
    };
    nlohmann::json labels = {{"ego", current("ego")}, {"tracks", nlohmann::json::object()}};
    for (const auto& id : seg.tracks_in_range) labels["tracks"][id] = current(id);
    const auto& ego_sug = s.ego_suggestions[static_cast<std::size_t>(k)];
    return {200,
            {{"scene_id", scene_id},
             {"segment_index", k},
             {"segment_count", s.segments.size()},
             {"frames", frames},
             {"ego", {{"suggested_label", ego_sug ? nlohmann::json(std::string(display_name(*ego_sug))) : nlohmann::json()}}},
             {"tracks", tracks},
             {"bev",
              {{"origin_frame", b.frames[static_cast<std::size_t>(seg.first_frame())].index},
               {"axes", "x forward, y left, meters"},
               {"ego", ego_line},
               {"tracks", track_lines}}},
             {"labels", labels},
             {"actions", action_names()}}};
  }

  HttpReply put_label(const nlohmann::json& body) {
    if (!body.is_object()) return unprocessable("body", "expected a JSON object");
    auto str = [&](const char* f) -> std::optional<std::string> {
      if (!body.contains(f) || !body[f].is_string()) return std::nullopt;
      return body[f].get<std::string>();
    };
    const auto scene_id = str("scene_id");
    if (!scene_id || !scenes_.count(*scene_id)) return unprocessable("scene_id", "unknown or missing scene_id");
    const auto& scene = scenes_.at(*scene_id);
    if (!body.contains("segment_index") || !body["segment_index"].is_number_integer()) {
      return unprocessable("segment_index", "integer required");
    }
    const int k = body["segment_index"].get<int>();
    if (k < 0 || k >= static_cast<int>(scene.segments.size())) return unprocessable("segment_index", "out of range");
    const auto target = str("target");
    const auto& in_range = scene.segments[static_cast<std::size_t>(k)].tracks_in_range;
    if (!target || (*target != "ego" && std::find(in_range.begin(), in_range.end(), *target) == in_range.end())) {
      return unprocessable("target", "must be \"ego\" or a track in range for this segment");
    }
    const auto label_text = str("label");
    const auto label = label_text ? parse_action(*label_text) : std::nullopt;
    if (!label) return unprocessable("label", "must be one of the 8 action phrases");
    LabelSource source = LabelSource::kHuman;
    if (body.contains("source")) {
      const auto s = str("source");
      const auto parsed = s ? parse_source(*s) : std::nullopt;
      if (!parsed) return unprocessable("source", "must be auto, suggested or human");
      source = *parsed;
    }
    if (!body.contains("base_revision") || !body["base_revision"].is_number_integer() ||
        body["base_revision"].get<long>() < 0) {
      return unprocessable("base_revision", "non-negative integer required");
    }
    LabelRecord rec{*scene_id, k, *target, *label, source, 0, str("annotator").value_or("anonymous"), {}};
    const auto r = store_.put_label(rec, body["base_revision"].get<long>());
    if (r.conflict) {
      return {409, {{"error", "stale revision"}, {"current_revision", r.current_revision}, {"current", to_json(r.record)}}};
    }
    return {200, to_json(r.record)};
  }

  HttpReply put_review(const nlohmann::json& body) {
    if (!body.is_object()) return unprocessable("body", "expected a JSON object");
    if (!body.contains("qa_id") || !body["qa_id"].is_string()) return unprocessable("qa_id", "string required");
    auto it = qa_index_.find(body["qa_id"].get<std::string>());
    if (it == qa_index_.end()) return {404, {{"error", "unknown qa_id"}}};
    const auto& item = qa_[it->second];
    const auto verdict = body.contains("verdict") && body["verdict"].is_string()
                             ? parse_verdict(body["verdict"].get<std::string>())
                             : std::nullopt;
    if (!verdict) return unprocessable("verdict", "must be accepted, rejected or edited");
    ReviewRecord rec{item.id, *verdict, nullptr, body.value("annotator", "anonymous"), {}, 0};
    if (*verdict == Verdict::kEdited) {
      const auto& a = body.contains("edited_answer") ? body["edited_answer"] : nlohmann::json();
      if (!valid_answer(item, a)) return unprocessable("edited_answer", "not a valid answer for this item's format");
      rec.edited_answer = item.format == AnswerFormat::kExactPhrase
                              ? nlohmann::json(std::string(display_name(*parse_action(a.get<std::string>()))))
                              : a;
    }
    return {200, to_json(store_.put_review(rec))};
  }

  nlohmann::json labels_json(const std::string& scene_filter) const {
    const auto snap = store_.snapshot();
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [key, r] : snap->effective) {
      if (!scene_filter.empty() && r.scene_id != scene_filter) continue;
      auto j = to_json(r);
      j["revision"] = snap->latest.at(key).revision;
      j["label_revision"] = r.revision;
      out.push_back(std::move(j));
    }
    return out;
  }

  nlohmann::json qa_json(const std::string& scene_filter) const {
    const auto snap = store_.snapshot();
    nlohmann::json out = nlohmann::json::array();
    for (const auto& item : qa_) {
      if (!scene_filter.empty() && item.scene_id != scene_filter) continue;
      auto j = to_json(item);
      auto r = snap->reviews.find(item.id);
      j["review"] = r == snap->reviews.end() ? nlohmann::json() : to_json(r->second);
      out.push_back(std::move(j));
    }
    return out;
  }

  HttpReply export_labels(const std::string& scene_id) const {
    const auto snap = store_.snapshot();
    if (!scene_id.empty()) {
      auto it = scenes_.find(scene_id);
      if (it == scenes_.end()) return {404, {{"error", "unknown scene " + scene_id}}};
      return {200, to_json(export_annotations(*snap, scene_id, it->second.segments))};
    }
    nlohmann::json all = nlohmann::json::array();
    for (const auto& [id, s] : scenes_) all.push_back(to_json(export_annotations(*snap, id, s.segments)));
    return {200, all};
  }

  /// Reviewed QA file: rejected items dropped, edited answers applied.
  std::vector<QAItem> export_qa() const {
    const auto snap = store_.snapshot();
    std::vector<QAItem> out;
    for (const auto& item : qa_) {
      auto r = snap->reviews.find(item.id);
      if (r == snap->reviews.end() || r->second.verdict == Verdict::kAccepted) {
        out.push_back(item);
      } else if (r->second.verdict == Verdict::kEdited) {
        auto edited = item;
        if (item.format == AnswerFormat::kFrameList) {
          edited.answer_frames = r->second.edited_answer.get<std::vector<int>>();
          std::sort(edited.answer_frames.begin(), edited.answer_frames.end());
        } else {
          edited.answer = r->second.edited_answer.get<std::string>();
        }
        out.push_back(std::move(edited));
      }
    }
    return out;
  }

 private:
  struct Scene {
    SceneBundle bundle;
    std::vector<Segment> segments;
    std::vector<std::optional<Action>> ego_suggestions;
  };

  static nlohmann::json action_names() {
    nlohmann::json out = nlohmann::json::array();
    for (Action a : kAllActions) out.push_back(std::string(display_name(a)));
    return out;
  }

  static bool valid_answer(const QAItem& item, const nlohmann::json& a) {
    switch (item.format) {
      case AnswerFormat::kSingleLetter: {
        if (!a.is_string() || a.get<std::string>().size() != 1) return false;
        const char c = a.get<std::string>()[0];
        return c >= 'A' && c < 'A' + static_cast<int>(item.options.size());
      }
      case AnswerFormat::kExactPhrase: return a.is_string() && parse_action(a.get<std::string>()).has_value();
      case AnswerFormat::kFrameList:
        if (!a.is_array() || a.empty()) return false;
        for (const auto& f : a) {
          if (!f.is_number_integer() || f.get<int>() < 0 || (item.frame_count > 0 && f.get<int>() >= item.frame_count)) {
            return false;
          }
        }
        return true;
    }
    return false;
  }

  nlohmann::json media_url(const std::optional<std::string>& path) const {
    if (!path || opt_.media_dir.empty()) return nullptr;
    const auto rel = std::filesystem::path(*path).lexically_relative(opt_.media_dir);
    if (rel.empty() || rel.native().rfind("..", 0) == 0) return nullptr;
    return "/media/" + rel.generic_string();
  }

  static void reply(httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  }

  bool authorized(const httplib::Request& req) const {
    return opt_.token.empty() || req.get_header_value("X-TAD-Token") == opt_.token;
  }

  template <typename Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req)) return reply(res, {401, {{"error", "missing or wrong X-TAD-Token"}}});
      try {
        fn(req, res);
      } catch (const std::exception& e) {
        reply(res, {500, {{"error", e.what()}}});
      }
    };
  }

  static std::optional<nlohmann::json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      reply(res, unprocessable("body", "malformed JSON"));
      return std::nullopt;
    }
  }

  void routes() {
    server_.set_socket_options(exclusive_socket_options);
    server_.set_default_headers({{"Access-Control-Allow-Origin", opt_.cors_origin},
                                 {"Access-Control-Allow-Headers", "Content-Type, X-TAD-Token"},
                                 {"Access-Control-Allow-Methods", "GET, PUT, OPTIONS"}});
    server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server_.Get("/scenes", guarded([this](const httplib::Request&, httplib::Response& res) {
                  reply(res, {200, scenes_json()});
                }));
    server_.Get(R"(/scenes/([^/]+)/segments/(-?\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, segment_json(req.matches[1], std::stoi(req.matches[2])));
                }));
    server_.Put("/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  if (auto body = parse_body(req, res)) reply(res, put_label(*body));
                }));
    server_.Get("/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, {200, labels_json(req.get_param_value("scene"))});
                }));
    server_.Get("/qa", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, {200, qa_json(req.get_param_value("scene"))});
                }));
    server_.Put("/reviews", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  if (auto body = parse_body(req, res)) reply(res, put_review(*body));
                }));
    server_.Get("/export/labels", guarded([this](const httplib::Request& req, httplib::Response& res) {
                  reply(res, export_labels(req.get_param_value("scene")));
                }));
    server_.Get("/export/qa", guarded([this](const httplib::Request&, httplib::Response& res) {
                  res.set_content(serialize_qa(export_qa()), "application/json");
                }));
    if (!opt_.media_dir.empty()) server_.set_mount_point("/media", opt_.media_dir.string());
    if (!opt_.ui_dir.empty() && std::filesystem::exists(opt_.ui_dir)) server_.set_mount_point("/", opt_.ui_dir.string());
  }

  ServiceOptions opt_;
  LabelStore store_;
  std::map<std::string, Scene> scenes_;
  std::vector<QAItem> qa_;
  std::map<std::string, std::size_t> qa_index_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::mutex life_mu_;
  std::condition_variable stopped_cv_;
  bool stopping_ = false;
};

}  // namespace tad
