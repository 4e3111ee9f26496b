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
#include <regex>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "tad/mock_server.hpp"
#include "tad/pipelines.hpp"
#include "tad/synthetic.hpp"

namespace {

namespace fs = std::filesystem;
using tad::test::straight_scene;

tad::QAItem scene_item(const tad::SceneBundle& b) {
  tad::QAItem item;
  item.id = b.scene_id + "/ordering/000";
  item.scene_id = b.scene_id;
  item.task = tad::Task::kTemporalOrdering;
  item.format = tad::AnswerFormat::kSingleLetter;
  item.question = "Q?";
  item.options = {"x", "y"};
  item.answer = "A";
  item.frame_count = static_cast<int>(b.frames.size());
  return item;
}

tad::QAItem segment_item(const tad::SceneBundle& b, int k) {
  auto item = scene_item(b);
  item.id = b.scene_id + "/ea/000";
  item.task = tad::Task::kExactAction;
  item.format = tad::AnswerFormat::kExactPhrase;
  item.options.clear();
  item.answer = "Stopped";
  item.segment_index = k;
  return item;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST(BaselinePrompt, SceneItemShowsAllFrames) {
  const auto b = straight_scene(40);
  const auto segs = tad::partition_scene(b, {});
  const auto p = tad::build_baseline_prompt(b, scene_item(b), segs, false);
  EXPECT_EQ(p.image_count(), 40u);
  EXPECT_TRUE(tad::labels_precede_images(p));
  EXPECT_EQ(p.messages[0].parts.back().text, "Q?");
  EXPECT_EQ(p.messages[0].parts[0].text, "Frame0:");
  EXPECT_EQ(p.params.max_tokens, 1024);
  EXPECT_EQ(p.params.temperature, 0.0);
}

TEST(BaselinePrompt, SegmentItemShowsSegmentFrames) {
  const auto b = straight_scene(40);
  const auto segs = tad::partition_scene(b, {});
  const auto p = tad::build_baseline_prompt(b, segment_item(b, 3), segs, false);
  EXPECT_EQ(p.image_count(), 10u);
  EXPECT_EQ(p.messages[0].parts[0].text, "Frame10:");
}

TEST(BaselinePrompt, EgoPoseLines) {
  auto b = straight_scene(2);
  b.ego_poses[1].rotation = tad::Quaternion::from_yaw(tad::deg_to_rad(90));
  tad::Segment seg;
  seg.frame_indices = {0, 1};
  const auto p = tad::build_baseline_prompt(b, segment_item(b, 0), {seg}, true);
  const auto& block = p.messages[0].parts[p.messages[0].parts.size() - 2].text;
  EXPECT_EQ(block, "Ego vehicle pose at each frame (global frame, meters and degrees):\n"
                   "Frame0: translation=(0.00,0.00,0.00), yaw=0.0°\n"
                   "Frame1: translation=(2.50,0.00,0.00), yaw=90.0°\n");
}

TEST(BaselinePrompt, MissingImageNamesFrames) {
  auto b = straight_scene(5);
  b.frames[2].image_path.reset();
  b.frames[4].image_path = "";
  try {
    tad::build_baseline_prompt(b, scene_item(b), {}, false);
    FAIL();
  } catch (const tad::PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("frame(s) 2, 4"), std::string::npos);
  }
}

TEST(TCogMap, StoppedSegmentLine) {
  auto b = straight_scene(8, 0.0);
  tad::Segment seg;
  seg.frame_indices = {1, 2, 3, 4, 5, 6, 7};
  const auto s = tad::build_tcogmap_context(b, {seg}, {});
  ASSERT_EQ(s.lines.size(), 1u);
  EXPECT_EQ(s.lines[0], "Motion summary for Frame1 to Frame7: The ego-vehicle is stopped.");
}

TEST(TCogMap, OneLinePerSegmentWithScheduledLabels) {
  const auto suite = tad::synthetic::make_suite();
  const auto& scene = suite[2];  // stopped, then starting, then straight
  const auto segs = tad::partition_scene(scene.bundle, {});
  const auto s = tad::build_tcogmap_context(scene.bundle, segs, {});
  ASSERT_EQ(s.lines.size(), 10u);
  for (std::size_t j = 0; j < segs.size(); ++j) {
    const auto expected = scene.annotations.segments[j].ego;
    ASSERT_TRUE(expected);
    EXPECT_EQ(s.lines[j], tad::motion_summary_line(segs[j].first_frame(), segs[j].last_frame(), *expected));
  }
  EXPECT_EQ(s.text(), tad::build_tcogmap_context(scene.bundle, segs, {}).text());
}

TEST(TCogMap, ClassifierFailureNamesSegment) {
  auto b = straight_scene(40);
  b.ego_poses[12].timestamp = b.ego_poses[11].timestamp;
  try {
    tad::build_tcogmap_context(b, tad::partition_scene(b, {}), {});
    FAIL();
  } catch (const tad::PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("segment 1:"), std::string::npos);  // frames 3..12
  }
}

TEST(TCogMap, AblationsShapeThePrompt) {
  const auto b = straight_scene(40);
  const auto segs = tad::partition_scene(b, {});
  const auto summary = tad::build_tcogmap_context(b, segs, {});
  const auto item = scene_item(b);
  tad::PromptBundle seen;
  tad::FunctionModel vlm("vlm", [&](const tad::PromptBundle& p) {
    seen = p;
    return std::string("A");
  });
  EXPECT_EQ(tad::answer_with_tcogmap(b, item, vlm, segs, summary), "A");
  EXPECT_EQ(seen.image_count(), 40u);
  EXPECT_NE(seen.text().find(summary.lines[9]), std::string::npos);
  EXPECT_EQ(seen.messages[0].parts.back().text, "Q?");

  tad::answer_with_tcogmap(b, item, vlm, segs, summary, tad::Ablation::kSummaryOnly);
  EXPECT_EQ(seen.image_count(), 0u);
  EXPECT_NE(seen.text().find("Motion summary"), std::string::npos);

  tad::answer_with_tcogmap(b, item, vlm, segs, summary, tad::Ablation::kFramesOnly);
  EXPECT_EQ(seen.image_count(), 40u);
  EXPECT_EQ(seen.text().find("Motion summary"), std::string::npos);

  tad::answer_with_tcogmap(b, item, vlm, segs, summary, tad::Ablation::kBlind);
  EXPECT_EQ(seen.image_count(), 0u);
  EXPECT_EQ(seen.text(), "Q?");
  EXPECT_EQ(vlm.calls(), 4);
}

TEST(TCogMap, ErrorsCarryItemId) {
  const auto b = straight_scene(40);
  const auto segs = tad::partition_scene(b, {});
  tad::FunctionModel vlm("vlm", [](const tad::PromptBundle&) -> std::string { throw tad::TransportError("down"); });
  try {
    tad::answer_with_tcogmap(b, scene_item(b), vlm, segs, {});
    FAIL();
  } catch (const tad::Error& e) {
    EXPECT_EQ(e.code(), "transport");
    EXPECT_EQ(std::string(e.what()).rfind("fixture/ordering/000: ", 0), 0u);
  }
}

TEST(TCogMap, OracleMockAnswersSegmentQuestionThroughHttp) {
  const auto suite = tad::synthetic::make_suite();
  const auto& scene = suite[2];
  tad::MockRule oracle;
  oracle.responder = tad::tcogmap_oracle;
  tad::MockServer server({{oracle}, "I cannot tell."});
  server.start();
  tad::EndpointConfig cfg;
  cfg.base_url = server.base_url();
  cfg.reencode_images = false;
  cfg.retries = 0;
  tad::HttpChatModel vlm(cfg);

  const auto dir = fs::temp_directory_path() / fmt::format("tad_pipe_{}", ::getpid());
  auto bundle = scene.bundle;
  fs::create_directories(dir);
  for (auto& f : bundle.frames) {
    f.image_path = (dir / fmt::format("{}.jpg", f.index)).string();
    tad::write_text_file(*f.image_path, "jpegbytes");
  }
  const auto segs = tad::partition_scene(bundle, {});
  const auto summary = tad::build_tcogmap_context(bundle, segs, {});
  tad::QAItem item = segment_item(bundle, 3);
  item.question = tad::exact_action_question(std::nullopt);
  item.answer = "Stopped";
  EXPECT_EQ(tad::answer_with_tcogmap(bundle, item, vlm, segs, summary), "Stopped");
  item.segment_index = 5;
  EXPECT_EQ(tad::answer_with_tcogmap(bundle, item, vlm, segs, summary), "Starting");
  EXPECT_EQ(tad::answer_with_tcogmap(bundle, item, vlm, segs, summary, tad::Ablation::kBlind), "I cannot tell.");
  fs::remove_all(dir);
}

// Scene-CoT ---------------------------------------------------------------------

int step_of(const tad::PromptBundle& p) {
  const auto t = p.text();
  if (t.find("Give a high-level description") != std::string::npos) return 1;
  if (t.find("Focus only on the ego vehicle") != std::string::npos) return 2;
  if (t.find("other vehicles close to the ego") != std::string::npos) return 3;
  if (t.find("Summarize the motion as JSON") != std::string::npos) return 4;
  return 0;
}

std::string first_label(const tad::PromptBundle& p) {
  for (const auto& part : p.messages[0].parts) {
    if (part.kind == tad::PromptPart::Kind::kImage) return part.frame_label;
  }
  return "text-only";
}

TEST(SceneCot, CallAccountingAndCaching) {
  const auto b = straight_scene(40);
  const auto segs = tad::partition_scene(b, {});
  tad::FunctionModel vlm("vlm", [](const tad::PromptBundle& p) {
    EXPECT_EQ(p.image_count(), step_of(p) < 4 ? 4u : 0u);
    return fmt::format("step{} at {}", step_of(p), first_label(p));
  });
  std::string final_prompt;
  tad::FunctionModel llm("llm", [&](const tad::PromptBundle& p) {
    EXPECT_EQ(p.image_count(), 0u);
    final_prompt = p.text();
    return std::string("A");
  });
  tad::TraceCache cache;
  const tad::PromptLibrary lib;
  EXPECT_EQ(tad::run_scene_cot(b, scene_item(b), vlm, llm, segs, lib, cache), "A");
  EXPECT_EQ(vlm.calls(), 4 * 10);
  EXPECT_EQ(llm.calls(), 1);

  // c_j = step 1 + step 4 for every segment, in segment order.
  std::size_t cursor = 0;
  for (const auto& seg : segs) {
    const auto first = fmt::format("Frame{}:", seg.first_frame());
    const auto c = fmt::format("step1 at {}\nstep4 at text-only", first);
    const auto pos = final_prompt.find(c, cursor);
    ASSERT_NE(pos, std::string::npos) << seg.segment_index;
    cursor = pos + 1;
  }
  EXPECT_EQ(final_prompt.find("step2"), std::string::npos);

  tad::run_scene_cot(b, segment_item(b, 4), vlm, llm, segs, lib, cache);
  EXPECT_EQ(vlm.calls(), 40);
  EXPECT_EQ(llm.calls(), 2);
  EXPECT_NE(final_prompt.find("The question refers to Segment 4 (Frame13 to Frame22)."), std::string::npos);
}

TEST(SceneCot, StepsAreConditionedOnEarlierOutputs) {
  const auto b = straight_scene(40);
  tad::Segment seg = tad::partition_scene(b, {})[0];
  std::vector<std::string> prompts;
  tad::FunctionModel vlm("vlm", [&](const tad::PromptBundle& p) {
    prompts.push_back(p.text());
    return fmt::format("OUT{}", step_of(p));
  });
  const auto t = tad::run_segment_cot(b, seg, vlm, tad::PromptLibrary(), 4);
  ASSERT_EQ(prompts.size(), 4u);
  EXPECT_NE(prompts[1].find("OUT1"), std::string::npos);
  EXPECT_NE(prompts[2].find("OUT1"), std::string::npos);
  EXPECT_NE(prompts[2].find("OUT2"), std::string::npos);
  EXPECT_NE(prompts[3].find("OUT2"), std::string::npos);
  EXPECT_NE(prompts[3].find("OUT3"), std::string::npos);
  EXPECT_EQ(t.context(), "OUT1\nOUT4");
}

TEST(SceneCot, ScriptedTimelineAnswersOrdering) {
  const auto b = straight_scene(40);
  const auto segs = tad::partition_scene(b, {});
  // Step 4 is text-only, so script the turn through step 2, which step 4 is conditioned on.
  tad::FunctionModel vlm_turn("vlm", [](const tad::PromptBundle& p) {
    const int step = step_of(p);
    if (step == 2) return std::string(first_label(p) == "Frame20:" ? "turning left" : "straight");
    if (step == 4) {
      const bool turn = p.text().find("turning left") != std::string::npos;
      return fmt::format(R"({{"ego_vehicle": "{}", "nearby_vehicles": []}})",
                         turn ? "Turn left" : "Straight, constant speed");
    }
    return std::string("a road");
  });
  tad::FunctionModel llm("llm", [](const tad::PromptBundle& p) {
    const auto text = p.text();
    static const std::regex ego_re(R"re("ego_vehicle": "([^"]+)")re");
    std::vector<std::string> seq;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), ego_re); it != std::sregex_iterator(); ++it) {
      if (seq.empty() || seq.back() != (*it)[1].str()) seq.push_back((*it)[1].str());
    }
    std::string joined;
    for (const auto& s : seq) joined += (joined.empty() ? "" : "; ") + s;
    for (char c : {'A', 'B', 'C', 'D'}) {
      if (text.find(fmt::format("{}. {}.", c, joined)) != std::string::npos) return fmt::format("Answer: {}", c);
    }
    return std::string("unknown");
  });
  auto item = scene_item(b);
  item.options = {"Turn left; Straight, constant speed", "Straight, constant speed; Turn left; Straight, constant speed",
                  "Straight, constant speed; Turn left", "Turn left"};
  item.question = tad::multiple_choice_text(tad::ordering_stem(std::nullopt), item.options);
  item.answer = "B";
  tad::TraceCache cache;
  const auto raw = tad::run_scene_cot(b, item, vlm_turn, llm, segs, tad::PromptLibrary(), cache);
  EXPECT_EQ(raw, "Answer: B");
  EXPECT_EQ(tad::score_raw(item, raw).score, 1.0);
}

TEST(SceneCot, FailedStepPersistsPartialTrace) {
  const auto b = straight_scene(40);
  const auto segs = tad::partition_scene(b, {});
  const auto dir = fs::temp_directory_path() / fmt::format("tad_cot_{}", ::getpid());
  fs::remove_all(dir);
  tad::FunctionModel vlm("vlm", [](const tad::PromptBundle& p) -> std::string {
    if (step_of(p) == 3 && first_label(p) == "Frame7:") throw tad::ModelError(503, "overloaded");
    return "fine";
  });
  tad::FunctionModel llm("llm", [](const tad::PromptBundle&) { return std::string("A"); });
  tad::TraceCache cache(dir);
  const tad::PromptLibrary lib;
  try {
    tad::run_scene_cot(b, scene_item(b), vlm, llm, segs, lib, cache);
    FAIL();
  } catch (const tad::Error& e) {
    EXPECT_NE(std::string(e.what()).find("segment 2 step 3"), std::string::npos) << e.what();
  }
  const auto partial = cache.file_for(tad::TraceCache::key(b.scene_id, 2, lib.version(), "vlm"), ".partial.json");
  ASSERT_TRUE(fs::exists(partial));
  const auto j = nlohmann::json::parse(tad::read_text_file(partial));
  EXPECT_EQ(j["failed_step"], 3);
  EXPECT_EQ(j["scene_description"], "fine");
  EXPECT_EQ(llm.calls(), 0);

  // Segments 0 and 1 completed before the abort; a fresh cache over the same directory reuses them.
  tad::FunctionModel healthy("vlm", [](const tad::PromptBundle&) { return std::string("fine"); });
  tad::TraceCache reloaded(dir);
  tad::run_scene_cot(b, scene_item(b), healthy, llm, segs, lib, reloaded);
  EXPECT_EQ(healthy.calls(), 4 * 8);
  fs::remove_all(dir);
}

TEST(SceneCot, CacheComputesOncePerKeyUnderConcurrency) {
  tad::TraceCache cache;
  std::atomic<int> computed{0};
  tad::parallel_for(32, 8, [&](std::size_t i) {
    const auto key = tad::TraceCache::key("s", static_cast<int>(i % 4), "p", "m");
    const auto t = cache.get_or_compute(key, [&] {
      ++computed;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      tad::SegmentTrace tr;
      tr.segment_index = static_cast<int>(i % 4);
      tr.scene_description = "d";
      return tr;
    });
    EXPECT_EQ(t.segment_index, static_cast<int>(i % 4));
  });
  EXPECT_EQ(computed.load(), 4);
  EXPECT_EQ(cache.size(), 4u);
}

TEST(Runs, ErrorsAreRecordedPerItem) {
  auto b = straight_scene(40);
  std::map<std::string, tad::SceneBundle> bundles{{b.scene_id, b}};
  tad::FunctionModel vlm("vlm", [](const tad::PromptBundle& p) -> std::string {
    if (p.image_count() == 10) throw tad::TransportError("down");
    return "Answer: A";
  });
  tad::TraceCache cache;
  tad::RunOptions opt;
  opt.method = tad::Method::kBaseline;
  opt.parallel = 2;
  const auto out = tad::run_items({scene_item(b), segment_item(b, 1)}, bundles, vlm, nullptr, tad::PromptLibrary(),
                                  cache, opt);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].score, 1.0);
  EXPECT_EQ(out[1].score, 0.0);
  EXPECT_NE(out[1].error.find("down"), std::string::npos);
  opt.method = tad::Method::kSceneCot;
  EXPECT_THROW(tad::run_items({scene_item(b)}, bundles, vlm, nullptr, tad::PromptLibrary(), cache, opt),
               tad::ConfigError);
}

TEST(Prompts, ShippedFilesMatchDefaults) {
  const tad::PromptLibrary shipped{fs::path(TAD_PROMPTS_DIR)};
  const tad::PromptLibrary builtin;
  EXPECT_EQ(shipped.version(), builtin.version());
  for (const auto& [name, text] : tad::default_prompt_templates()) {
    EXPECT_TRUE(fs::exists(fs::path(TAD_PROMPTS_DIR) / (name + ".txt"))) << name;
  }
}

TEST(Prompts, TemplateRendering) {
  EXPECT_EQ(tad::render_template("a {x} {{lit}} b", {{"x", "1"}}), "a 1 {lit} b");
  EXPECT_THROW(tad::render_template("{missing}", {}), tad::PipelineError);
  EXPECT_THROW(tad::render_template("{open", {}), tad::PipelineError);
  const auto dir = fs::temp_directory_path() / fmt::format("tad_prompts_{}", ::getpid());
  fs::create_directories(dir);
  tad::write_text_file(dir / "cot_pointer.txt", "See segment {index}.\n");
  const tad::PromptLibrary custom(dir);
  EXPECT_NE(custom.version(), tad::PromptLibrary().version());
  EXPECT_EQ(custom.render("cot_pointer", {{"index", "2"}}), "See segment 2.\n");
  fs::remove_all(dir);
}

}  // namespace
