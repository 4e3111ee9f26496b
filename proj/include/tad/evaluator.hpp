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
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "tad/action.hpp"
#include "tad/error.hpp"
#include "tad/qa.hpp"
#include "tad/rng.hpp"

namespace tad {

struct ParsedAnswer {
  enum class Kind { kLetter, kPhrase, kFrames, kUnparseable };
  Kind kind = Kind::kUnparseable;
  char letter = 0;
  std::string phrase;       // display name of the matched action
  std::vector<int> frames;  // sorted, unique
  std::string raw;

  bool parseable() const { return kind != Kind::kUnparseable; }
};

namespace detail {

inline ParsedAnswer unparseable(std::string_view raw) {
  ParsedAnswer p;
  p.raw = std::string(raw);
  return p;
}

inline std::optional<char> parse_letter(const std::string& raw) {
  static const std::regex answer_re(R"(answer\s*(?:is|:)?\s*[\(\[\*]*\s*([A-D])\b)", std::regex::icase);
  std::optional<char> last;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), answer_re); it != std::sregex_iterator(); ++it) {
    const char c = (*it)[1].str()[0];
    if (c >= 'A' && c <= 'D') last = c;  // icase also admits lowercase letters
  }
  if (last) return last;
  static const std::regex token_re(R"(\b([A-D])\b)");
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), token_re); it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str()[0];
  }
  return last;
}

inline std::optional<Action> parse_phrase(std::string_view raw) {
  const std::string hay = " " + canonicalize_phrase(raw) + " ";
  std::optional<Action> best;
  std::size_t best_len = 0;
  for (Action a : kAllActions) {
    const std::string needle = " " + canonicalize_phrase(display_name(a)) + " ";
    if (hay.find(needle) != std::string::npos && needle.size() > best_len) {
      best = a;
      best_len = needle.size();
    }
  }
  return best;
}

inline std::vector<int> integers_in(std::string_view text) {
  std::vector<int> out;
  static const std::regex int_re(R"(\d+)");
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), int_re); it != std::sregex_iterator(); ++it) {
    const auto& m = (*it)[0].str();
    if (m.size() <= 9) out.push_back(std::stoi(m));
  }
  return out;
}

inline std::vector<int> parse_frames(const std::string& raw) {
  std::vector<int> out;
  const auto close = raw.rfind(']');
  if (close != std::string::npos) {
    const auto open = raw.rfind('[', close);
    if (open != std::string::npos) out = integers_in(std::string_view(raw).substr(open + 1, close - open - 1));
  }
  if (out.empty()) out = integers_in(raw);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace detail

inline ParsedAnswer parse_answer(std::string_view raw, AnswerFormat fmt) {
  ParsedAnswer p = detail::unparseable(raw);
  switch (fmt) {
    case AnswerFormat::kSingleLetter:
      if (auto c = detail::parse_letter(p.raw)) {
        p.kind = ParsedAnswer::Kind::kLetter;
        p.letter = *c;
      }
      break;
    case AnswerFormat::kExactPhrase:
      if (auto a = detail::parse_phrase(raw)) {
        p.kind = ParsedAnswer::Kind::kPhrase;
        p.phrase = std::string(display_name(*a));
      }
      break;
    case AnswerFormat::kFrameList:
      p.frames = detail::parse_frames(p.raw);
      if (!p.frames.empty()) p.kind = ParsedAnswer::Kind::kFrames;
      break;
  }
  return p;
}

inline nlohmann::json to_json(const ParsedAnswer& p) {
  switch (p.kind) {
    case ParsedAnswer::Kind::kLetter: return std::string(1, p.letter);
    case ParsedAnswer::Kind::kPhrase: return p.phrase;
    case ParsedAnswer::Kind::kFrames: return p.frames;
    case ParsedAnswer::Kind::kUnparseable: break;
  }
  return nullptr;
}

/// |pred ∩ gt| / |pred ∪ gt| over frame sets; inputs need not be sorted.
inline double temporal_miou(std::vector<int> pred, std::vector<int> gt) {
  auto normalize = [](std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  normalize(gt);
  if (gt.empty()) throw DomainError("temporal_miou: empty ground truth");
  normalize(pred);
  if (pred.empty()) return 0.0;
  std::vector<int> inter;
  std::set_intersection(pred.begin(), pred.end(), gt.begin(), gt.end(), std::back_inserter(inter));
  const auto uni = pred.size() + gt.size() - inter.size();
  return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

inline double score_item(const QAItem& item, const ParsedAnswer& parsed) {
  using K = ParsedAnswer::Kind;
  if (parsed.kind == K::kUnparseable) return 0.0;
  const K expected = item.format == AnswerFormat::kSingleLetter  ? K::kLetter
                     : item.format == AnswerFormat::kExactPhrase ? K::kPhrase
                                                                 : K::kFrames;
  if (parsed.kind != expected) throw Error("harness", item.id + ": parse mode does not match answer format");
  switch (item.format) {
    case AnswerFormat::kSingleLetter: return item.answer == std::string(1, parsed.letter) ? 1.0 : 0.0;
    case AnswerFormat::kExactPhrase:
      return canonicalize_phrase(item.answer) == canonicalize_phrase(parsed.phrase) ? 1.0 : 0.0;
    case AnswerFormat::kFrameList: return temporal_miou(parsed.frames, item.answer_frames);
  }
  return 0.0;
}

// -- scored runs --------------------------------------------------------------

struct ScoredItem {
  std::string id;
  Task task = Task::kExactAction;
  bool ego = true;
  std::string target;  // "ego" or the track id
  std::string raw;
  ParsedAnswer parsed;
  double score = 0.0;
  std::string error;  // set when the item could not be answered
};

inline std::string target_label(const QAItem& item) {
  if (item.is_ego()) return "ego";
  return item.object->track_id.empty() ? std::string(category_name(item.object->category)) : item.object->track_id;
}

inline ScoredItem score_raw(const QAItem& item, std::string raw) {
  ScoredItem s{item.id, item.task, item.is_ego(), target_label(item), std::move(raw), {}, 0.0};
  s.parsed = parse_answer(s.raw, item.format);
  s.score = score_item(item, s.parsed);
  return s;
}

inline nlohmann::json to_json(const ScoredItem& s) {
  nlohmann::json j = {{"id", s.id},
          {"task", std::string(task_name(s.task))},
          {"target", s.target},
          {"raw", s.raw},
          {"parsed", to_json(s.parsed)},
          {"score", s.score}};
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

inline std::string serialize_scored(const std::vector<ScoredItem>& items) {
  std::string out;
  for (const auto& s : items) out += to_json(s).dump() + "\n";
  return out;
}

inline std::vector<ScoredItem> parse_scored(const std::string& text) {
  std::vector<ScoredItem> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ScoredItem s;
      s.id = j.at("id").get<std::string>();
      const auto task = parse_task(j.at("task").get<std::string>());
      if (!task) throw DomainError("unknown task");
      s.task = *task;
      s.target = j.at("target").get<std::string>();
      s.ego = s.target == "ego";
      s.raw = j.value("raw", "");
      const auto& p = j.at("parsed");
      s.parsed.raw = s.raw;
      if (p.is_array()) {
        s.parsed.kind = ParsedAnswer::Kind::kFrames;
        s.parsed.frames = p.get<std::vector<int>>();
      } else if (p.is_string() && p.get<std::string>().size() == 1) {
        s.parsed.kind = ParsedAnswer::Kind::kLetter;
        s.parsed.letter = p.get<std::string>()[0];
      } else if (p.is_string()) {
        s.parsed.kind = ParsedAnswer::Kind::kPhrase;
        s.parsed.phrase = p.get<std::string>();
      }
      s.score = j.at("score").get<double>();
      s.error = j.value("error", "");
      out.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw DomainError(fmt::format("scored run line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

// -- reports ------------------------------------------------------------------

struct TaskCell {
  int count = 0;
  int ego_count = 0;
  int non_ego_count = 0;
  int unparseable = 0;
  std::optional<double> score;  // percent
  std::optional<double> ego_score;
  std::optional<double> non_ego_score;
};

struct EvalReport {
  std::map<Task, TaskCell> tasks;  // every task present as a key
  std::optional<double> macro;
  std::optional<double> ego_macro;
  std::optional<double> non_ego_macro;
  int total = 0;
  int unparseable = 0;
  std::vector<std::string> warnings;

  double unparseable_rate() const { return total == 0 ? 0.0 : static_cast<double>(unparseable) / total; }
};

namespace detail {

inline std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  double sum = 0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace detail

inline EvalReport aggregate_report(const std::vector<ScoredItem>& scored) {
  EvalReport r;
  std::map<Task, std::vector<double>> all, ego, non_ego;
  for (const auto& s : scored) {
    auto& cell = r.tasks[s.task];
    ++cell.count;
    ++r.total;
    (s.ego ? cell.ego_count : cell.non_ego_count) += 1;
    if (!s.parsed.parseable()) {
      ++cell.unparseable;
      ++r.unparseable;
    }
    all[s.task].push_back(s.score);
    (s.ego ? ego : non_ego)[s.task].push_back(s.score);
  }
  std::vector<double> cells, ego_cells, non_ego_cells;
  for (Task t : kAllTasks) {
    auto& cell = r.tasks[t];
    auto pct = [](std::optional<double> m) { return m ? std::optional(*m * 100.0) : std::nullopt; };
    cell.score = pct(detail::mean_of(all[t]));
    cell.ego_score = pct(detail::mean_of(ego[t]));
    cell.non_ego_score = pct(detail::mean_of(non_ego[t]));
    if (cell.score) {
      cells.push_back(*cell.score);
    } else {
      r.warnings.push_back(fmt::format("task '{}' has no items; excluded from the average", task_name(t)));
    }
    if (cell.ego_score) ego_cells.push_back(*cell.ego_score);
    if (cell.non_ego_score) non_ego_cells.push_back(*cell.non_ego_score);
  }
  r.macro = detail::mean_of(cells);
  r.ego_macro = detail::mean_of(ego_cells);
  r.non_ego_macro = detail::mean_of(non_ego_cells);
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    if (v) return *v;
    return nullptr;
  };
  nlohmann::json tasks = nlohmann::json::object();
  for (const auto& [t, c] : r.tasks) {
    tasks[std::string(task_name(t))] = {{"count", c.count},
                                        {"ego_count", c.ego_count},
                                        {"non_ego_count", c.non_ego_count},
                                        {"unparseable", c.unparseable},
                                        {"score", opt(c.score)},
                                        {"ego", opt(c.ego_score)},
                                        {"non_ego", opt(c.non_ego_score)}};
  }
  return {{"tasks", tasks},
          {"average", opt(r.macro)},
          {"ego_average", opt(r.ego_macro)},
          {"non_ego_average", opt(r.non_ego_macro)},
          {"total", r.total},
          {"unparseable", r.unparseable},
          {"unparseable_rate", r.unparseable_rate()},
          {"warnings", r.warnings}};
}

inline constexpr std::string_view short_task_name(Task t) {
  switch (t) {
    case Task::kExactAction: return "EA";
    case Task::kMultipleChoiceAction: return "MC";
    case Task::kActionDuration: return "Dur";
    case Task::kTemporalOrdering: return "Ord";
    case Task::kActionLocalization: return "ActLoc";
    case Task::kRelativeLocalization: return "RelLoc";
    case Task::kObjectLocalization: return "ObjLoc";
  }
  return "";
}

/// Aligned table: one row per named report, one column per task plus the average.
inline std::string render_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t name_w = 6;
  for (const auto& [name, r] : rows) name_w = std::max(name_w, name.size() + 10);
  auto cell = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : std::string("-"); };
  std::string out = fmt::format("{:<{}}", "Method", name_w);
  for (Task t : kAllTasks) out += fmt::format(" {:>8}", short_task_name(t));
  out += fmt::format(" {:>8}\n", "Avg");
  for (const auto& [name, r] : rows) {
    auto line = [&](const std::string& label, auto pick, const std::optional<double>& avg) {
      out += fmt::format("{:<{}}", label, name_w);
      for (Task t : kAllTasks) {
        auto it = r.tasks.find(t);
        out += fmt::format(" {:>8}", it == r.tasks.end() ? std::string("-") : cell(pick(it->second)));
      }
      out += fmt::format(" {:>8}\n", cell(avg));
    };
    line(name, [](const TaskCell& c) { return c.score; }, r.macro);
    line(name + " (ego)", [](const TaskCell& c) { return c.ego_score; }, r.ego_macro);
    line(name + " (non-ego)", [](const TaskCell& c) { return c.non_ego_score; }, r.non_ego_macro);
  }
  out += fmt::format("{:<{}}", "Count", name_w);
  if (!rows.empty()) {
    for (Task t : kAllTasks) {
      auto it = rows.front().second.tasks.find(t);
      out += fmt::format(" {:>8}", it == rows.front().second.tasks.end() ? 0 : it->second.count);
    }
    out += fmt::format(" {:>8}", rows.front().second.total);
  }
  out += "\n";
  return out;
}

// -- chance -------------------------------------------------------------------

enum class ChancePolicy { kInterval, kBernoulli };

inline std::optional<ChancePolicy> parse_chance_policy(std::string_view s) {
  if (s == "interval") return ChancePolicy::kInterval;
  if (s == "bernoulli") return ChancePolicy::kBernoulli;
  return std::nullopt;
}

/// One uniformly random answer in the item's format.
inline ParsedAnswer random_answer(const QAItem& item, Rng& rng, ChancePolicy policy) {
  ParsedAnswer p;
  switch (item.format) {
    case AnswerFormat::kSingleLetter:
      p.kind = ParsedAnswer::Kind::kLetter;
      p.letter = letter_at(rng.below(std::max<std::size_t>(item.options.size(), 1)));
      break;
    case AnswerFormat::kExactPhrase:
      p.kind = ParsedAnswer::Kind::kPhrase;
      p.phrase = std::string(display_name(kAllActions[rng.below(kAllActions.size())]));
      break;
    case AnswerFormat::kFrameList: {
      const int n = item.frame_count > 0 ? item.frame_count : (item.answer_frames.empty() ? 1 : item.answer_frames.back() + 1);
      if (policy == ChancePolicy::kInterval) {
        const int len = static_cast<int>(rng.between(1, n));
        const int start = static_cast<int>(rng.between(0, n - len));
        for (int f = start; f < start + len; ++f) p.frames.push_back(f);
      } else {
        for (int f = 0; f < n; ++f) {
          if (rng.below(2) == 1) p.frames.push_back(f);
        }
      }
      p.kind = p.frames.empty() ? ParsedAnswer::Kind::kUnparseable : ParsedAnswer::Kind::kFrames;
      break;
    }
  }
  return p;
}

/// Expected score of uniform guessing, estimated over `trials` per item.
inline EvalReport chance_baseline(const std::vector<QAItem>& items, std::uint64_t seed, int trials,
                                  ChancePolicy policy = ChancePolicy::kInterval) {
  if (trials < 1) throw DomainError("chance_baseline: trials must be >= 1");
  std::vector<ScoredItem> scored;
  scored.reserve(items.size());
  for (const auto& item : items) {
    Rng rng(derive_seed(seed, item.id, "chance"));
    double sum = 0;
    for (int k = 0; k < trials; ++k) sum += score_item(item, random_answer(item, rng, policy));
    ScoredItem s{item.id, item.task, item.is_ego(), target_label(item), "", {}, sum / trials};
    s.parsed.kind = ParsedAnswer::Kind::kLetter;  // synthetic answers always parse
    scored.push_back(std::move(s));
  }
  return aggregate_report(scored);
}

}  // namespace tad
