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

#include <random>
#include <set>

#include <gtest/gtest.h>

#include "tad/evaluator.hpp"

namespace {

using tad::AnswerFormat;
using tad::ParsedAnswer;

double brute_miou(const std::set<int>& a, const std::set<int>& b) {
  std::set<int> uni = a;
  uni.insert(b.begin(), b.end());
  int inter = 0;
  for (int x : a) inter += b.count(x) ? 1 : 0;
  return uni.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni.size());
}

tad::QAItem letter_item(std::string answer, int n_options = 4) {
  tad::QAItem item;
  item.id = "x/mc/000";
  item.task = tad::Task::kMultipleChoiceAction;
  item.format = AnswerFormat::kSingleLetter;
  for (int i = 0; i < n_options; ++i) item.options.push_back("opt" + std::to_string(i));
  item.answer = std::move(answer);
  item.frame_count = 40;
  return item;
}

tad::QAItem phrase_item(std::string answer) {
  tad::QAItem item;
  item.id = "x/ea/000";
  item.task = tad::Task::kExactAction;
  item.format = AnswerFormat::kExactPhrase;
  item.answer = std::move(answer);
  item.frame_count = 40;
  return item;
}

tad::QAItem frames_item(std::vector<int> gt, int n) {
  tad::QAItem item;
  item.id = "x/action-loc/000";
  item.task = tad::Task::kActionLocalization;
  item.format = AnswerFormat::kFrameList;
  item.answer_frames = std::move(gt);
  item.frame_count = n;
  return item;
}

TEST(ParseAnswer, Letters) {
  EXPECT_EQ(tad::parse_answer("The answer is B.", AnswerFormat::kSingleLetter).letter, 'B');
  EXPECT_EQ(tad::parse_answer("C", AnswerFormat::kSingleLetter).letter, 'C');
  EXPECT_EQ(tad::parse_answer("A is wrong because... Answer: (D)", AnswerFormat::kSingleLetter).letter, 'D');
  EXPECT_EQ(tad::parse_answer("Between A and B, I pick B", AnswerFormat::kSingleLetter).letter, 'B');
  EXPECT_FALSE(tad::parse_answer("no idea", AnswerFormat::kSingleLetter).parseable());
  EXPECT_FALSE(tad::parse_answer("E", AnswerFormat::kSingleLetter).parseable());
}

TEST(ParseAnswer, PhraseMatchesContainmentOracle) {
  EXPECT_EQ(tad::parse_answer("It is turning left. Final: Turn left", AnswerFormat::kExactPhrase).phrase,
            "Turn left");
  const std::vector<std::string> texts{
      "turn right!",          "STOPPED",          "Change lane to the left.", "straight constant speed",
      "I think: Stopping",    "nothing relevant", "change lane to the right then turn left",
      "The car is Starting.", "turning right",
  };
  for (const auto& raw : texts) {
    // Oracle: lowercase, letters/digits/spaces only, longest phrase present as whole words.
    std::string norm;
    for (char c : raw) {
      if (std::isalnum(static_cast<unsigned char>(c))) norm += static_cast<char>(std::tolower(c));
      else norm += ' ';
    }
    std::string squashed;
    for (char c : norm) {
      if (c == ' ' && (!squashed.empty() && squashed.back() == ' ')) continue;
      squashed += c;
    }
    squashed = " " + squashed + " ";
    std::string expected;
    for (auto a : tad::kAllActions) {
      std::string p;
      for (char c : std::string(tad::display_name(a))) {
        if (c != ',') p += static_cast<char>(std::tolower(c));
      }
      if (squashed.find(" " + p + " ") != std::string::npos && p.size() > expected.size()) {
        expected = std::string(tad::display_name(a));
      }
    }
    const auto parsed = tad::parse_answer(raw, AnswerFormat::kExactPhrase);
    EXPECT_EQ(parsed.parseable() ? parsed.phrase : std::string(), expected) << raw;
  }
}

TEST(ParseAnswer, Frames) {
  EXPECT_EQ(tad::parse_answer("[1, 2, 3, 10]", AnswerFormat::kFrameList).frames, (std::vector<int>{1, 2, 3, 10}));
  EXPECT_EQ(tad::parse_answer("Frames 4 and 5, maybe [5, 6] no: [7, 8]", AnswerFormat::kFrameList).frames,
            (std::vector<int>{7, 8}));
  EXPECT_EQ(tad::parse_answer("frames 3, 1, 3", AnswerFormat::kFrameList).frames, (std::vector<int>{1, 3}));
  EXPECT_FALSE(tad::parse_answer("none", AnswerFormat::kFrameList).parseable());
}

TEST(TemporalMiou, Examples) {
  EXPECT_DOUBLE_EQ(tad::temporal_miou({1, 2, 3}, {1, 2, 3}), 1.0);
  EXPECT_DOUBLE_EQ(tad::temporal_miou({1, 2}, {3, 4}), 0.0);
  EXPECT_EQ(tad::temporal_miou({0, 1, 2, 3, 4}, {2, 3, 4, 5, 6}), 3.0 / 7.0);
  EXPECT_DOUBLE_EQ(tad::temporal_miou({}, {1}), 0.0);
  EXPECT_THROW(tad::temporal_miou({1}, {}), tad::DomainError);
}

TEST(TemporalMiou, MatchesBruteForceAndProperties) {
  std::mt19937 gen(5);
  std::uniform_int_distribution<int> size(0, 15), frame(0, 39);
  for (int trial = 0; trial < 10000; ++trial) {
    std::set<int> a, b;
    for (int i = size(gen); i > 0; --i) a.insert(frame(gen));
    for (int i = size(gen) + 1; i > 0; --i) b.insert(frame(gen));
    const std::vector<int> va(a.begin(), a.end()), vb(b.begin(), b.end());
    const double m = tad::temporal_miou(va, vb);
    ASSERT_EQ(m, brute_miou(a, b));
    ASSERT_GE(m, 0.0);
    ASSERT_LE(m, 1.0);
    ASSERT_EQ(m == 1.0, a == b);
    if (!a.empty()) ASSERT_EQ(m, tad::temporal_miou(vb, va));
  }
}

TEST(ScoreItem, Formats) {
  EXPECT_EQ(tad::score_item(letter_item("D"), tad::parse_answer("D", AnswerFormat::kSingleLetter)), 1.0);
  EXPECT_EQ(tad::score_item(letter_item("D"), tad::parse_answer("A", AnswerFormat::kSingleLetter)), 0.0);
  EXPECT_EQ(tad::score_item(phrase_item("Turn left"), tad::parse_answer("turn left.", AnswerFormat::kExactPhrase)),
            1.0);
  EXPECT_EQ(tad::score_item(phrase_item("Straight, constant speed"),
                            tad::parse_answer("Straight constant speed", AnswerFormat::kExactPhrase)),
            1.0);
  EXPECT_EQ(tad::score_item(frames_item({1, 2}, 10), tad::parse_answer("n/a", AnswerFormat::kFrameList)), 0.0);
  EXPECT_DOUBLE_EQ(tad::score_item(frames_item({0, 1, 2, 3, 4}, 10),
                                   tad::parse_answer("[2,3,4,5,6]", AnswerFormat::kFrameList)),
                   3.0 / 7.0);
  EXPECT_THROW(tad::score_item(letter_item("D"), tad::parse_answer("[1]", AnswerFormat::kFrameList)), tad::Error);
}

TEST(ScoreItem, IdempotentAndPure) {
  const auto item = phrase_item("Stopped");
  const auto parsed = tad::parse_answer("stopped", AnswerFormat::kExactPhrase);
  EXPECT_EQ(tad::score_item(item, parsed), tad::score_item(item, parsed));
}

tad::ScoredItem scored(tad::Task task, bool ego, double score) {
  tad::ScoredItem s;
  s.id = "id";
  s.task = task;
  s.ego = ego;
  s.target = ego ? "ego" : "t1";
  s.parsed.kind = ParsedAnswer::Kind::kLetter;
  s.score = score;
  return s;
}

TEST(Report, AllCorrect) {
  std::vector<tad::ScoredItem> items;
  for (auto t : tad::kAllTasks) items.push_back(scored(t, true, 1.0));
  const auto r = tad::aggregate_report(items);
  for (const auto& [t, c] : r.tasks) EXPECT_EQ(c.score, 100.0);
  EXPECT_EQ(r.macro, 100.0);
}

TEST(Report, MacroIsMeanOfCells) {
  std::vector<tad::ScoredItem> items;
  for (auto t : tad::kAllTasks) {
    for (int k = 0; k < 3; ++k) items.push_back(scored(t, k != 1, t == tad::Task::kExactAction ? 1.0 : 0.0));
  }
  const auto r = tad::aggregate_report(items);
  EXPECT_NEAR(*r.macro, 100.0 / 7.0, 1e-12);
  for (const auto& [t, c] : r.tasks) EXPECT_EQ(c.ego_count + c.non_ego_count, c.count);
}

TEST(Report, EgoOnlyTaskHasNoNonEgoCell) {
  const auto r = tad::aggregate_report({scored(tad::Task::kActionDuration, true, 1.0)});
  EXPECT_TRUE(r.tasks.at(tad::Task::kActionDuration).ego_score.has_value());
  EXPECT_FALSE(r.tasks.at(tad::Task::kActionDuration).non_ego_score.has_value());
  EXPECT_FALSE(r.tasks.at(tad::Task::kExactAction).score.has_value());
  EXPECT_EQ(r.warnings.size(), 6u);
  EXPECT_EQ(r.macro, 100.0);
}

TEST(Report, TableAndJson) {
  const auto r = tad::aggregate_report({scored(tad::Task::kExactAction, true, 1.0),
                                        scored(tad::Task::kExactAction, false, 0.0)});
  const auto text = tad::render_table({{"tcogmap", r}});
  EXPECT_NE(text.find("tcogmap (non-ego)"), std::string::npos);
  EXPECT_NE(text.find("50.00"), std::string::npos);
  const auto j = tad::to_json(r);
  EXPECT_EQ(j["tasks"]["Exact Answer Action Recognition"]["count"], 2);
}

TEST(ScoredRun, JsonLinesRoundTrip) {
  auto item = frames_item({1, 2, 3}, 10);
  auto s = tad::score_raw(item, "[2, 3]");
  auto text = tad::serialize_scored({s, tad::score_raw(letter_item("B"), "nothing")});
  const auto back = tad::parse_scored(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].parsed.frames, (std::vector<int>{2, 3}));
  EXPECT_DOUBLE_EQ(back[0].score, 2.0 / 3.0);
  EXPECT_FALSE(back[1].parsed.parseable());
  EXPECT_EQ(tad::serialize_scored(back), text);
}

TEST(Chance, LettersAndPhrases) {
  std::vector<tad::QAItem> mc, ea;
  for (int i = 0; i < 50; ++i) {
    auto m = letter_item(std::string(1, tad::letter_at(static_cast<std::size_t>(i % 4))));
    m.id = "mc" + std::to_string(i);
    mc.push_back(m);
    auto e = phrase_item(std::string(tad::display_name(tad::kAllActions[static_cast<std::size_t>(i % 8)])));
    e.id = "ea" + std::to_string(i);
    ea.push_back(e);
  }
  // Binomial bound: 50 items x 1000 trials.
  const double sigma_mc = 100.0 * std::sqrt(0.25 * 0.75 / 50000.0);
  const double sigma_ea = 100.0 * std::sqrt(0.125 * 0.875 / 50000.0);
  EXPECT_NEAR(*tad::chance_baseline(mc, 1, 1000).tasks.at(tad::Task::kMultipleChoiceAction).score, 25.0, 3 * sigma_mc);
  EXPECT_NEAR(*tad::chance_baseline(ea, 1, 1000).tasks.at(tad::Task::kExactAction).score, 12.5, 3 * sigma_ea);
}

TEST(Chance, FullRangeIntervalExpectation) {
  // gt = all N frames: mIoU = L/N with L uniform on [1, N], so E = (N+1)/(2N).
  constexpr int kN = 10;
  std::vector<int> all;
  for (int f = 0; f < kN; ++f) all.push_back(f);
  const auto r = tad::chance_baseline({frames_item(all, kN)}, 3, 20000);
  const double expected = 100.0 * (kN + 1) / (2.0 * kN);
  // L/N has variance (N^2-1)/(12 N^2) ~ 0.0825.
  EXPECT_NEAR(*r.macro, expected, 100.0 * 3 * std::sqrt(0.0825 / 20000));
  EXPECT_GE(*r.macro, 100.0 / kN);
}

TEST(Chance, ReproducibleWithSeed) {
  std::vector<tad::QAItem> items{letter_item("A"), frames_item({2, 3}, 10)};
  items[1].id = "other";
  EXPECT_EQ(tad::to_json(tad::chance_baseline(items, 9, 50)), tad::to_json(tad::chance_baseline(items, 9, 50)));
  EXPECT_GT(*tad::chance_baseline(items, 9, 50, tad::ChancePolicy::kBernoulli).macro, 0.0);
}

}  // namespace
