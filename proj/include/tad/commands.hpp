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

#include <signal.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tad/annotation_service.hpp"
#include "tad/config.hpp"
#include "tad/evaluator.hpp"
#include "tad/gateway.hpp"
#include "tad/mock_server.hpp"
#include "tad/nuscenes.hpp"
#include "tad/pipelines.hpp"
#include "tad/qa.hpp"
#include "tad/scene_json.hpp"
#include "tad/synthetic.hpp"

namespace tad::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kExitError = 2;
inline constexpr int kExitUnparseable = 3;

/// Per-task item counts of the released benchmark (ego, non-ego).
inline const std::map<Task, std::pair<int, int>>& reference_counts() {
  static const std::map<Task, std::pair<int, int>> counts{
      {Task::kExactAction, {1500, 1104}},       {Task::kMultipleChoiceAction, {1030, 756}},
      {Task::kActionDuration, {124, 0}},        {Task::kTemporalOrdering, {62, 18}},
      {Task::kActionLocalization, {338, 432}},  {Task::kRelativeLocalization, {92, 0}},
      {Task::kObjectLocalization, {0, 405}}};
  return counts;
}

/// Flag values that override the config file when given.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallel;
  std::string method;
  std::string ablation;
  bool trace = false;
  std::string endpoint;
  std::string llm_endpoint;
  std::string tasks;
  bool ego_only = false;
  bool non_ego_only = false;
  std::string dataroot, bundles, annotations, qa_file, runs_dir, prompts_dir, media_dir, store_dir;
};

inline RunConfig resolve_config(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.parallel) c.parallel = *o.parallel;
  if (!o.method.empty()) {
    auto m = parse_method(o.method);
    if (!m) throw ConfigError("--method", "unknown method '" + o.method + "'");
    c.method = *m;
  }
  if (!o.ablation.empty()) {
    auto a = parse_ablation(o.ablation);
    if (!a) throw ConfigError("--ablation", "unknown ablation '" + o.ablation + "'");
    c.ablation = *a;
  }
  if (o.trace) c.trace = true;
  if (!o.endpoint.empty() && o.endpoint != "mock") {
    c.endpoint.base_url = o.endpoint;
    c.llm.base_url = o.endpoint;
  }
  if (!o.llm_endpoint.empty()) c.llm.base_url = o.llm_endpoint;
  auto path = [](const std::string& flag, fs::path& target) {
    if (!flag.empty()) target = flag;
  };
  path(o.dataroot, c.paths.dataroot);
  path(o.bundles, c.paths.bundles);
  path(o.annotations, c.paths.annotations);
  path(o.qa_file, c.paths.qa_file);
  path(o.runs_dir, c.paths.runs_dir);
  path(o.prompts_dir, c.paths.prompts_dir);
  path(o.media_dir, c.paths.media_dir);
  path(o.store_dir, c.paths.store_dir);
  c.segments.validate();
  c.motion.validate();
  if (c.parallel < 1) throw ConfigError("--parallel", "must be >= 1");
  return c;
}

inline GenerationFilter resolve_filter(const Overrides& o) {
  GenerationFilter f;
  if (!o.tasks.empty()) {
    f.tasks.clear();
    std::size_t pos = 0;
    while (pos <= o.tasks.size()) {
      auto end = o.tasks.find(',', pos);
      if (end == std::string::npos) end = o.tasks.size();
      const auto name = o.tasks.substr(pos, end - pos);
      const auto t = parse_task(name);
      if (!t) throw ConfigError("--tasks", "unknown task '" + name + "'");
      f.tasks.insert(*t);
      pos = end + 1;
    }
  }
  if (o.ego_only) f.non_ego = false;
  if (o.non_ego_only) f.ego = false;
  return f;
}

inline bool keep(const GenerationFilter& f, Task task, bool ego) {
  return f.tasks.contains(task) && (ego ? f.ego : f.non_ego);
}

inline fs::path media_dir_of(const RunConfig& c) {
  if (!c.paths.media_dir.empty()) return c.paths.media_dir;
  return c.paths.bundles.parent_path() / "media";
}

inline std::vector<fs::path> json_files(const fs::path& dir, const std::string& key) {
  if (!fs::is_directory(dir)) throw ConfigError(key, "directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::map<std::string, SceneBundle> load_bundles(const fs::path& dir) {
  std::map<std::string, SceneBundle> out;
  for (const auto& p : json_files(dir, "paths.bundles")) {
    auto b = load_bundle(p);
    const auto issues = validate_bundle(b);
    if (!issues.empty()) {
      throw Error("bundle", fmt::format("{}: {} {}", p.string(), issues.front().code, issues.front().detail));
    }
    out.emplace(b.scene_id, std::move(b));
  }
  return out;
}

inline std::map<std::string, SceneAnnotations> load_annotation_dir(const fs::path& dir) {
  std::map<std::string, SceneAnnotations> out;
  for (const auto& p : json_files(dir, "paths.annotations")) {
    SceneAnnotations ann;
    try {
      ann = annotations_from_json(json::parse(read_text_file(p)));
    } catch (const json::exception& e) {
      throw Error("annotations", p.string() + ": " + e.what());
    }
    out.emplace(ann.scene_id, std::move(ann));
  }
  return out;
}

inline std::vector<QAItem> load_qa(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("paths.qa_file", "file not found: " + path.string());
  return parse_qa(read_text_file(path));
}

inline std::string stamp() {
  return fmt::format("{:%Y%m%dT%H%M%S}", fmt::gmtime(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now())));
}

// -- commands -------------------------------------------------------------------

inline int cmd_synth(const RunConfig& c, std::ostream& out) {
  const auto media = media_dir_of(c);
  const auto suite = synthetic::make_suite(media, c.segments);
  json summary = {{"scenes", json::array()}, {"media_dir", media.string()}};
  for (const auto& s : suite) {
    save_bundle(c.paths.bundles / (s.bundle.scene_id + ".json"), s.bundle);
    write_text_file(c.paths.annotations / (s.bundle.scene_id + ".json"), to_json(s.annotations).dump(2) + "\n");
    summary["scenes"].push_back(s.bundle.scene_id);
  }
  out << summary.dump() << "\n";
  return 0;
}

inline int cmd_ingest(const RunConfig& c, const std::vector<std::string>& scenes, std::ostream& out) {
  if (c.paths.dataroot.empty() || !fs::exists(c.paths.dataroot)) {
    throw ConfigError("paths.dataroot", "dataset root not found: " + c.paths.dataroot.string());
  }
  const auto names = scenes.empty() ? list_nuscenes_scenes(c.paths.dataroot) : scenes;
  json summary = json::array();
  for (const auto& name : names) {
    auto b = ingest_nuscenes(c.paths.dataroot, name);
    const auto issues = validate_bundle(b);
    json violations = json::array();
    for (const auto& v : issues) violations.push_back({{"code", v.code}, {"detail", v.detail}});
    save_bundle(c.paths.bundles / (b.scene_id + ".json"), b);
    summary.push_back({{"scene_id", b.scene_id},
                       {"frames", b.frame_count()},
                       {"tracks", b.tracks.size()},
                       {"violations", violations}});
  }
  out << json{{"ingested", summary}}.dump() << "\n";
  return 0;
}

inline json segment_listing(const SceneBundle& b, const std::vector<Segment>& segments) {
  json segs = json::array();
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    json frames = json::array();
    for (int pos : seg.frame_indices) frames.push_back(b.frames[static_cast<std::size_t>(pos)].index);
    json suggestions = json::object();
    for (const auto& [id, s] : seg.suggestions) {
      suggestions[id] = {{"label", std::string(display_name(s.label))}, {"automatic", s.automatic}};
    }
    segs.push_back({{"index", k},
                    {"first_frame", frames.front()},
                    {"last_frame", frames.back()},
                    {"frames", frames},
                    {"tracks_in_range", seg.tracks_in_range},
                    {"suggestions", suggestions}});
  }
  return {{"scene_id", b.scene_id}, {"segments", segs}};
}

inline void emit(const json& j, const std::string& out_path, std::ostream& out) {
  if (out_path.empty()) {
    out << j.dump() << "\n";
  } else {
    write_text_file(out_path, j.dump(2) + "\n");
    out << json{{"written", out_path}}.dump() << "\n";
  }
}

inline int cmd_partition(const RunConfig& c, bool skeletons, const std::string& out_path, std::ostream& out) {
  json listing = json::array();
  for (const auto& [id, b] : load_bundles(c.paths.bundles)) {
    const auto segments = prepare_segments(b, c.segments, c.motion);
    listing.push_back(segment_listing(b, segments));
    const auto skeleton = c.paths.annotations / (id + ".json");
    if (skeletons && !fs::exists(skeleton)) {
      write_text_file(skeleton, to_json(annotations_for(id, segments)).dump(2) + "\n");
    }
  }
  emit(listing, out_path, out);
  return 0;
}

inline int cmd_classify(const RunConfig& c, const std::string& out_path, std::ostream& out) {
  json listing = json::array();
  for (const auto& [id, b] : load_bundles(c.paths.bundles)) {
    json segs = json::array();
    const auto segments = partition_scene(b, c.segments);
    for (std::size_t k = 0; k < segments.size(); ++k) {
      const auto& seg = segments[k];
      json entry = {{"index", k},
                    {"first_frame", b.frames[static_cast<std::size_t>(seg.first_frame())].index},
                    {"last_frame", b.frames[static_cast<std::size_t>(seg.last_frame())].index}};
      try {
        entry["action"] = std::string(display_name(classify_motion(segment_poses(b, seg), c.motion)));
      } catch (const Error& e) {
        entry["action"] = nullptr;
        entry["error"] = e.what();
      }
      segs.push_back(std::move(entry));
    }
    listing.push_back({{"scene_id", id}, {"segments", segs}});
  }
  emit(listing, out_path, out);
  return 0;
}

inline int cmd_generate_qa(const RunConfig& c, const GenerationFilter& filter, std::ostream& out) {
  const auto bundles = load_bundles(c.paths.bundles);
  std::vector<QAItem> items;
  for (const auto& [id, ann] : load_annotation_dir(c.paths.annotations)) {
    auto it = bundles.find(id);
    if (it == bundles.end()) throw NotFoundError("annotations for '" + id + "' have no scene bundle");
    const auto issues = validate_annotations(ann, it->second);
    if (!issues.empty()) throw Error("annotations", id + ": " + issues.front());
    auto scene_items = generate_scene_qa(ann, it->second, c.segments.range_limit, c.seed, filter);
    items.insert(items.end(), std::make_move_iterator(scene_items.begin()), std::make_move_iterator(scene_items.end()));
  }
  write_text_file(c.paths.qa_file, serialize_qa(items));
  json tasks = json::object();
  for (Task t : kAllTasks) {
    int ego = 0, non_ego = 0;
    for (const auto& i : items) {
      if (i.task == t) ++(i.is_ego() ? ego : non_ego);
    }
    const auto& ref = reference_counts().at(t);
    tasks[std::string(task_code(t))] = {{"ego", ego},
                                        {"non_ego", non_ego},
                                        {"total", ego + non_ego},
                                        {"reference", {{"ego", ref.first}, {"non_ego", ref.second}, {"total", ref.first + ref.second}}}};
  }
  out << json{{"qa_file", c.paths.qa_file.string()}, {"items", items.size()}, {"seed", c.seed}, {"tasks", tasks}}.dump()
      << "\n";
  return 0;
}

/// Mock endpoint answering TCogMap prompts from their own motion summary.
inline MockScript oracle_script() {
  MockScript s;
  MockRule r;
  r.responder = builtin_responder("tcogmap-oracle");
  s.rules.push_back(std::move(r));
  s.default_response = "I cannot tell.";
  return s;
}

/// Completed records of an earlier attempt; a torn final line is ignored.
inline std::map<std::string, ScoredItem> completed_records(const fs::path& scored_path) {
  std::map<std::string, ScoredItem> done;
  if (!fs::exists(scored_path)) return done;
  std::ifstream in(scored_path);
  for (std::string line; std::getline(in, line);) {
    try {
      for (auto& s : parse_scored(line)) {
        if (s.error.empty()) done[s.id] = std::move(s);
      }
    } catch (const DomainError&) {
      if (in.peek() != EOF) throw;
    }
  }
  return done;
}

struct RunFlags {
  std::string name;
  bool resume = false;
  std::string mock_script;
};

inline int cmd_run(RunConfig c, const Overrides& o, const GenerationFilter& filter, const RunFlags& flags,
                   std::ostream& out) {
  std::vector<QAItem> items;
  for (auto& i : load_qa(c.paths.qa_file)) {
    if (keep(filter, i.task, i.is_ego())) items.push_back(std::move(i));
  }
  const auto bundles = load_bundles(c.paths.bundles);
  if (flags.resume && flags.name.empty()) throw ConfigError("--name", "--resume needs the name of the run to continue");
  const auto name = flags.name.empty()
                        ? fmt::format("{}-{}-{}", method_name(c.method), ablation_name(c.ablation), stamp())
                        : flags.name;
  const auto dir = c.paths.runs_dir / name;
  const auto scored_path = dir / "scored.jsonl";
  if (fs::exists(scored_path) && !flags.resume) {
    throw ConfigError("--name", "run '" + name + "' already exists; pass --resume or choose another name");
  }
  fs::create_directories(dir);

  std::unique_ptr<MockServer> mock;
  if (o.endpoint == "mock") {
    auto script = flags.mock_script.empty() ? oracle_script() : mock_script_from_json(json::parse(read_text_file(flags.mock_script)));
    mock = std::make_unique<MockServer>(std::move(script));
    mock->start();
    c.endpoint.base_url = mock->base_url();
    c.llm.base_url = mock->base_url();
    c.endpoint.api_key = c.llm.api_key = "mock";
  }
  if (c.trace) c.endpoint.trace_dir = c.llm.trace_dir = dir / "trace";
  c.validate();

  auto snapshot = to_json(c);
  snapshot["endpoint_mode"] = mock ? "mock" : "http";
  snapshot["qa_file"] = c.paths.qa_file.string();
  snapshot["items"] = items.size();
  write_text_file(dir / "config.json", snapshot.dump(2) + "\n");

  auto done = flags.resume ? completed_records(scored_path) : std::map<std::string, ScoredItem>{};
  std::vector<QAItem> pending;
  for (const auto& i : items) {
    if (!done.count(i.id)) pending.push_back(i);
  }

  const PromptLibrary lib = c.paths.prompts_dir.empty() ? PromptLibrary() : [&] {
    if (!fs::is_directory(c.paths.prompts_dir)) throw ConfigError("paths.prompts_dir", "directory not found");
    return PromptLibrary(c.paths.prompts_dir);
  }();
  TraceCache cache(c.paths.runs_dir / "cot-cache");
  HttpChatModel vlm(c.endpoint);
  std::unique_ptr<HttpChatModel> llm;
  if (c.method == Method::kSceneCot) llm = std::make_unique<HttpChatModel>(c.llm);

  RunOptions opt;
  opt.method = c.method;
  opt.ablation = c.ablation;
  opt.segments = c.segments;
  opt.motion = c.motion;
  opt.parallel = c.parallel;
  opt.segment_parallelism = c.segment_parallelism;

  std::ofstream log(scored_path, std::ios::app);
  auto fresh = run_items(pending, bundles, vlm, llm.get(), lib, cache, opt, [&](const ScoredItem& s) {
    log << to_json(s).dump() << "\n";
    log.flush();
  });
  log.close();
  for (auto& s : fresh) done[s.id] = std::move(s);

  std::vector<ScoredItem> scored;
  int errors = 0;
  for (const auto& i : items) {
    scored.push_back(done.at(i.id));
    if (!scored.back().error.empty()) ++errors;
  }
  write_text_file(scored_path, serialize_scored(scored));
  const auto report = aggregate_report(scored);
  write_text_file(dir / "report.json", to_json(report).dump(2) + "\n");
  write_text_file(dir / "report.txt", render_table({{name, report}}));
  out << json{{"run_dir", dir.string()},
              {"items", scored.size()},
              {"answered", fresh.size()},
              {"errors", errors},
              {"average", report.macro ? json(*report.macro) : json()},
              {"unparseable_rate", report.unparseable_rate()}}
             .dump()
      << "\n";
  if (report.unparseable_rate() > c.unparseable_limit) {
    throw Error("unparseable_limit", fmt::format("unparseable rate {:.4f} exceeds limit {}", report.unparseable_rate(),
                                                 c.unparseable_limit));
  }
  return 0;
}

inline int cmd_score(const RunConfig& c, const std::string& raw_path, const std::string& out_path, std::ostream& out) {
  std::map<std::string, QAItem> by_id;
  for (auto& i : load_qa(c.paths.qa_file)) by_id.emplace(i.id, std::move(i));
  if (!fs::exists(raw_path)) throw ConfigError("--raw", "file not found: " + raw_path);
  std::vector<ScoredItem> scored;
  std::ifstream in(raw_path);
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error("score", fmt::format("{} line {}: {}", raw_path, line_no, e.what()));
    }
    const auto id = j.value("id", "");
    auto it = by_id.find(id);
    if (it == by_id.end()) throw NotFoundError(fmt::format("{} line {}: unknown item '{}'", raw_path, line_no, id));
    auto s = score_raw(it->second, j.value("raw", ""));
    s.error = j.value("error", "");
    if (!s.error.empty()) s.score = 0.0;
    scored.push_back(std::move(s));
  }
  const auto text = serialize_scored(scored);
  if (out_path.empty()) {
    out << text;
  } else {
    write_text_file(out_path, text);
    out << json{{"written", out_path}, {"items", scored.size()}}.dump() << "\n";
  }
  return 0;
}

inline int cmd_report(const RunConfig& c, const GenerationFilter& filter, const std::vector<std::string>& files,
                      std::vector<std::string> names, const std::string& json_out, std::ostream& out) {
  if (files.empty()) throw ConfigError("files", "no scored-run files given");
  if (!names.empty() && names.size() != files.size()) throw ConfigError("--names", "one name per file");
  std::vector<std::pair<std::string, EvalReport>> rows;
  json reports = json::object();
  double worst = 0.0;
  for (std::size_t k = 0; k < files.size(); ++k) {
    const fs::path p = files[k];
    if (!fs::exists(p)) throw ConfigError("files", "file not found: " + p.string());
    std::vector<ScoredItem> kept;
    for (auto& s : parse_scored(read_text_file(p))) {
      if (keep(filter, s.task, s.ego)) kept.push_back(std::move(s));
    }
    const auto name = names.empty() ? (p.filename() == "scored.jsonl" ? p.parent_path().filename().string() : p.stem().string())
                                    : names[k];
    auto report = aggregate_report(kept);
    worst = std::max(worst, report.unparseable_rate());
    reports[name] = to_json(report);
    rows.emplace_back(name, std::move(report));
  }
  out << render_table(rows);
  if (!json_out.empty()) write_text_file(json_out, reports.dump(2) + "\n");
  if (worst > c.unparseable_limit) {
    throw Error("unparseable_limit", fmt::format("unparseable rate {:.4f} exceeds limit {}", worst, c.unparseable_limit));
  }
  return 0;
}

inline int cmd_chance(const RunConfig& c, const GenerationFilter& filter, std::optional<int> trials,
                      const std::string& policy_flag, const std::string& json_out, std::ostream& out) {
  std::vector<QAItem> items;
  for (auto& i : load_qa(c.paths.qa_file)) {
    if (keep(filter, i.task, i.is_ego())) items.push_back(std::move(i));
  }
  auto policy = c.chance_policy;
  if (!policy_flag.empty()) {
    auto p = parse_chance_policy(policy_flag);
    if (!p) throw ConfigError("--policy", "unknown policy '" + policy_flag + "'");
    policy = *p;
  }
  const auto report = chance_baseline(items, c.seed, trials.value_or(c.chance_trials), policy);
  out << render_table({{"Chance", report}});
  if (!json_out.empty()) write_text_file(json_out, to_json(report).dump(2) + "\n");
  return 0;
}

/// Blocks until SIGINT/SIGTERM, or for `seconds` when positive. The signals must
/// already be blocked in every thread.
inline void wait_for_shutdown(const sigset_t& set, double seconds) {
  if (seconds > 0) {
    timespec ts{static_cast<time_t>(seconds), static_cast<long>((seconds - static_cast<time_t>(seconds)) * 1e9)};
    while (sigtimedwait(&set, nullptr, &ts) < 0 && errno == EINTR) {
    }
    return;
  }
  int sig = 0;
  sigwait(&set, &sig);
}

inline sigset_t block_shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

struct ServeFlags {
  int port = 8000;
  std::string host = "127.0.0.1";
  double exit_after = 0;
  std::string script;
  std::string token;
  std::string ui_dir;
};

inline int cmd_serve_mock(const ServeFlags& f, std::ostream& out) {
  const auto set = block_shutdown_signals();
  MockScript script = f.script.empty() ? oracle_script() : mock_script_from_json(json::parse(read_text_file(f.script)));
  MockServer server(std::move(script));
  const int port = server.start(f.port, f.host);
  out << json{{"listening", fmt::format("http://{}:{}", f.host, port)}}.dump() << std::endl;
  wait_for_shutdown(set, f.exit_after);
  server.stop();
  out << json{{"requests", server.request_count()}}.dump() << std::endl;
  return 0;
}

inline int cmd_serve_annotation(const RunConfig& c, const ServeFlags& f, std::ostream& out) {
  const auto set = block_shutdown_signals();
  std::vector<SceneBundle> scenes;
  for (auto& [id, b] : load_bundles(c.paths.bundles)) scenes.push_back(std::move(b));
  std::vector<QAItem> qa;
  if (fs::exists(c.paths.qa_file)) qa = parse_qa(read_text_file(c.paths.qa_file));
  ServiceOptions opt;
  opt.store_dir = c.paths.store_dir;
  opt.media_dir = fs::absolute(media_dir_of(c));
  opt.ui_dir = f.ui_dir;
  opt.token = f.token;
  if (opt.token.empty()) {
    if (const char* env = std::getenv("TAD_ANNOTATION_TOKEN")) opt.token = env;
  }
  opt.segments = c.segments;
  opt.motion = c.motion;
  // Bundles written with relative image paths resolve against the working directory.
  for (auto& s : scenes) {
    for (auto& fr : s.frames) {
      if (fr.image_path) fr.image_path = fs::absolute(*fr.image_path).lexically_normal().string();
    }
  }
  AnnotationService service(std::move(scenes), std::move(qa), opt);
  const int port = service.start(f.port, f.host);
  out << json{{"listening", fmt::format("http://{}:{}", f.host, port)}}.dump() << std::endl;
  wait_for_shutdown(set, f.exit_after);
  service.stop();
  return 0;
}

inline json error_json(const std::exception& e) {
  json j = {{"error", "internal"}, {"message", e.what()}};
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) j["key"] = ce->key();
  if (const auto* ie = dynamic_cast<const IngestError*>(&e)) j["table"] = ie->table();
  if (const auto* te = dynamic_cast<const Error*>(&e)) j["error"] = te->code();
  return j;
}

/// Parses `argv` and runs one subcommand. Returns the process exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Temporal action understanding benchmark toolkit", "tad"};
  app.require_subcommand(1);
  app.fallthrough();
  Overrides o;
  app.add_option("--config", o.config, "TOML-style config file");
  app.add_option("--seed", o.seed, "Generation / chance seed");
  app.add_option("--parallel", o.parallel, "Concurrent items during run");
  app.add_option("--method", o.method, "baseline | baseline-ego-pose | scene-cot | tcogmap");
  app.add_option("--ablation", o.ablation, "full | frames-only | summary-only | blind");
  app.add_flag("--trace", o.trace, "Log request/response bodies under the run directory");
  app.add_option("--endpoint", o.endpoint, "Model base URL, or 'mock' for the built-in scripted server");
  app.add_option("--llm-endpoint", o.llm_endpoint, "Text model base URL for scene-cot");
  app.add_option("--tasks", o.tasks, "Comma list of task codes: ea,mc,duration,ordering,action-loc,relative-loc,object-loc");
  auto* ego = app.add_flag("--ego-only", o.ego_only, "Keep ego-vehicle items only");
  auto* non_ego = app.add_flag("--non-ego-only", o.non_ego_only, "Keep other-vehicle items only");
  ego->excludes(non_ego);
  app.add_option("--dataroot", o.dataroot);
  app.add_option("--bundles", o.bundles);
  app.add_option("--annotations", o.annotations);
  app.add_option("--qa", o.qa_file);
  app.add_option("--runs-dir", o.runs_dir);
  app.add_option("--prompts-dir", o.prompts_dir);
  app.add_option("--media-dir", o.media_dir);
  app.add_option("--store-dir", o.store_dir);

  std::vector<std::string> scenes;
  auto* ingest = app.add_subcommand("ingest", "Convert NuScenes scenes into scene bundles");
  ingest->add_option("--scene", scenes, "Scene name or token (repeatable; default all)");

  auto* synth = app.add_subcommand("synth", "Write the synthetic three-scene suite (bundles, labels, frames)");

  std::string out_path;
  bool skeletons = false;
  auto* classify = app.add_subcommand("classify-motions", "Classify the ego maneuver of every segment");
  classify->add_option("--out", out_path);
  auto* partition = app.add_subcommand("partition", "List segments with in-range vehicles and label suggestions");
  partition->add_option("--out", out_path);
  partition->add_flag("--skeletons", skeletons, "Write empty annotation files for unlabeled scenes");

  auto* generate = app.add_subcommand("generate-qa", "Generate the question file from labeled segments");

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Answer a QA file with one method and score it");
  run->add_option("--name", run_flags.name, "Run directory name under the runs dir");
  run->add_flag("--resume", run_flags.resume, "Continue an interrupted run");
  run->add_option("--mock-script", run_flags.mock_script, "JSON rules for --endpoint mock");

  std::string raw_path;
  auto* score = app.add_subcommand("score", "Score raw model answers ({id, raw} JSON lines)");
  score->add_option("--raw", raw_path)->required();
  score->add_option("--out", out_path);

  std::vector<std::string> files, names;
  std::string json_out;
  auto* report = app.add_subcommand("report", "Render a results table from scored-run files");
  report->add_option("files", files, "Scored-run files")->required();
  report->add_option("--names", names, "Row names, one per file");
  report->add_option("--json", json_out);

  std::optional<int> trials;
  std::string policy;
  auto* chance = app.add_subcommand("chance", "Expected score of uniform random answering");
  chance->add_option("--trials", trials);
  chance->add_option("--policy", policy, "interval | bernoulli");
  chance->add_option("--json", json_out);

  ServeFlags serve;
  auto* serve_mock = app.add_subcommand("serve-mock", "Serve the scripted chat-completions mock");
  auto* serve_ann = app.add_subcommand("serve-annotation", "Serve the annotation and review API");
  for (auto* s : {serve_mock, serve_ann}) {
    s->add_option("--port", serve.port, "0 picks a free port");
    s->add_option("--host", serve.host);
    s->add_option("--exit-after", serve.exit_after, "Stop after this many seconds");
  }
  serve_mock->add_option("--script", serve.script, "JSON rules file");
  serve_ann->add_option("--token", serve.token, "Shared X-TAD-Token (default $TAD_ANNOTATION_TOKEN)");
  serve_ann->add_option("--ui-dir", serve.ui_dir, "Static UI assets served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return kExitError;
  }

  try {
    if (serve_mock->parsed()) return cmd_serve_mock(serve, out);
    const auto cfg = resolve_config(o);
    const auto filter = resolve_filter(o);
    if (synth->parsed()) return cmd_synth(cfg, out);
    if (ingest->parsed()) return cmd_ingest(cfg, scenes, out);
    if (classify->parsed()) return cmd_classify(cfg, out_path, out);
    if (partition->parsed()) return cmd_partition(cfg, skeletons, out_path, out);
    if (generate->parsed()) return cmd_generate_qa(cfg, filter, out);
    if (run->parsed()) return cmd_run(cfg, o, filter, run_flags, out);
    if (score->parsed()) return cmd_score(cfg, raw_path, out_path, out);
    if (report->parsed()) return cmd_report(cfg, filter, files, names, json_out, out);
    if (chance->parsed()) return cmd_chance(cfg, filter, trials, policy, json_out, out);
    if (serve_ann->parsed()) return cmd_serve_annotation(cfg, serve, out);
  } catch (const std::exception& e) {
    err << error_json(e).dump() << "\n";
    return dynamic_cast<const Error*>(&e) && static_cast<const Error&>(e).code() == "unparseable_limit" ? kExitUnparseable
                                                                                                       : kExitError;
  }
  return kExitError;
}

}  // namespace tad::cli
