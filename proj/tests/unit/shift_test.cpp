#include <algorithm>
#include <atomic>
#include <memory>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "classrag/common/error.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/tasks.hpp"
#include "classrag/shift/shift.hpp"
#include "support.hpp"

namespace classrag::shift {
namespace {

using classrag::testing::make_rig;
using classrag::testing::make_synthetic_rig;

constexpr const char* kDenied = "The response may also include relevant real-world knowledge outside the dataset.";

TEST(ShiftPromptTest, DeniedSentenceRemoved) {
  const auto out = standardize_query_prompt(std::string("Answer the question. ") + kDenied + " Be brief.");
  EXPECT_EQ(out.find("real-world knowledge outside"), std::string::npos);
  EXPECT_NE(out.find("Answer the question. Be brief."), std::string::npos);
  EXPECT_NE(out.find("ignore real-world factuality"), std::string::npos);
}

TEST(ShiftPromptTest, Idempotent) {
  for (std::string p : {std::string("Clean prompt."), std::string(kDenied), std::string()}) {
    const auto once = standardize_query_prompt(p);
    EXPECT_EQ(standardize_query_prompt(once), once);
    EXPECT_TRUE(once.ends_with(p == kDenied ? "" : p));
  }
  const auto clean = standardize_query_prompt("Clean prompt.");
  EXPECT_EQ(clean.find("Answer strictly"), clean.rfind("Answer strictly"));
}

TEST(ShiftLoaderTest, ParsesAndValidates) {
  std::stringstream in;
  in << R"({"item_id":"p1","subject":"Physics","question":"q?","options":["a","b","c"],"correct_index":1,)"
     << R"("real_world_index":0,"doc_id":"phys","anchor_chunk":"phys#3"})" << "\n\n"
     << R"({"item_id":"p2","subject":"physics","question":"q?","options":["a","b"],"correct_index":0,)"
     << R"("doc_id":"phys","anchor_chunk":4})" << "\n";
  const auto items = read_ksqa_jsonl(in);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[0].subject, "physics");
  EXPECT_EQ(items[0].anchor_chunk, (corpus::ChunkId{"phys", 3}));
  EXPECT_EQ(items[0].real_world_index, 0u);
  EXPECT_EQ(items[1].anchor_chunk.ordinal, 4u);
  EXPECT_FALSE(items[1].real_world_index.has_value());
  EXPECT_EQ(ksqa_item_from_json(to_json(items[0])).anchor_chunk, items[0].anchor_chunk);
}

TEST(ShiftLoaderTest, RejectsBrokenItems) {
  auto base = nlohmann::json::parse(
      R"({"item_id":"x","question":"q","options":["a","b"],"correct_index":0,"doc_id":"d","anchor_chunk":"d#0"})");
  auto same = base;
  same["real_world_index"] = 0;
  EXPECT_THROW(ksqa_item_from_json(same), FormatError);
  auto out_of_range = base;
  out_of_range["correct_index"] = 2;
  EXPECT_THROW(ksqa_item_from_json(out_of_range), FormatError);
  std::stringstream dup;
  dup << base.dump() << "\n" << base.dump() << "\n";
  EXPECT_THROW(read_ksqa_jsonl(dup), FormatError);
}

TEST(ShiftSystemTest, Names) {
  EXPECT_EQ(parse_system("route"), System::routed);
  EXPECT_EQ(parse_system("graph-global"), System::graph_global);
  EXPECT_EQ(parse_system("none"), System::no_retrieval);
  EXPECT_FALSE(parse_system("bm25").has_value());
}

// Document of 60 filler chunks of 20 words; chunk `i` of `facts` states an
// altered fact.
struct Fixture {
  ShiftCorpus corpus;
  std::vector<KsqaItem> items;
};

Fixture make_fixture(std::size_t n_items) {
  static const std::vector<std::pair<std::string, std::string>> kFacts = {
      {"goggles", "Night goggles detect ultraviolet light."},
      {"boiling", "Pure water boils at forty degrees."},
      {"planet", "The largest planet is Mars."},
      {"capital", "The capital city was Lyon."},
      {"metal", "The lightest metal is gold."}};
  static const std::vector<std::vector<std::string>> kOptions = {
      {"infrared light", "ultraviolet light", "radio waves"},
      {"one hundred degrees", "forty degrees", "ten degrees"},
      {"Jupiter", "Mars", "Venus"},
      {"Paris", "Lyon", "Nice"},
      {"lithium", "gold", "iron"}};
  static const std::vector<std::string> kQuestions = {
      "What do night goggles detect?", "At what temperature does pure water boil?",
      "Which is the largest planet?", "Which city was the capital city?", "Which is the lightest metal?"};
  std::string text;
  for (std::size_t c = 0; c < 60; ++c) {
    std::string chunk;
    if (c % 10 == 5 && c / 10 < kFacts.size()) {
      chunk = kFacts[c / 10].second + " ";
    }
    while (text::split_whitespace(chunk).size() < 20) chunk += "filler" + std::to_string(c) + " ";
    // Cut to exactly 20 words so chunk c holds fact c/10.
    auto words = text::split_whitespace(chunk);
    words.resize(20);
    text += text::join(words, " ") + "\n";
  }
  Fixture f;
  const auto doc = corpus::ingest("phys", "Physics", corpus::Subject::science, text);
  const std::vector<corpus::CorpusDocument> docs = {doc};
  f.corpus = make_shift_corpus(docs, 20);
  for (std::size_t i = 0; i < n_items; ++i) {
    const auto k = i % kFacts.size();
    KsqaItem item;
    item.item_id = "item" + std::to_string(i);
    item.subject = "physics";
    item.question = kQuestions[k];
    item.options = kOptions[k];
    item.correct_index = 1;
    item.real_world_index = 0;
    item.doc_id = "phys";
    item.anchor_chunk = {"phys", k * 10 + 5};
    f.items.push_back(item);
  }
  return f;
}

TEST(ShiftRunTest, FaithfulAtShortScope) {
  auto f = make_fixture(5);
  auto rig = make_synthetic_rig();
  const auto report = run_ksqa(*rig.gateway, f.items, corpus::Scope::chunk, System::vector, f.corpus);
  const auto& cell = report.cells.at({"physics", corpus::Scope::chunk, System::vector});
  EXPECT_EQ(cell.n, 5u);
  EXPECT_EQ(cell.correct, 5u);
  EXPECT_DOUBLE_EQ(cell.accuracy(), 1.0);
  EXPECT_GT(cell.usage[llm::Phase::querying].llm_calls, 0u);
}

TEST(ShiftRunTest, NoRetrievalBaselineScoresZero) {
  auto f = make_fixture(5);
  auto rig = make_synthetic_rig();
  const auto report = run_ksqa(*rig.gateway, f.items, corpus::Scope::chunk, System::no_retrieval, f.corpus);
  EXPECT_DOUBLE_EQ(report.cells.at({"physics", corpus::Scope::chunk, System::no_retrieval}).accuracy(), 0.0);
  EXPECT_EQ(report.indexing_passes, 0u);
}

TEST(ShiftRunTest, ScriptedCounting) {
  auto f = make_fixture(10);
  auto rig = make_rig();
  // The first five answers pick the shifted option, the rest the real-world one.
  auto answered = std::make_shared<std::atomic<int>>(0);
  rig.mock->add_rule([answered](const llm::PromptRequest& r) -> std::optional<std::string> {
    if (r.task != llm::task::vector_answer) return std::nullopt;
    return std::string("The answer is ") + (answered->fetch_add(1) < 5 ? "B" : "A");
  });
  const auto report = run_ksqa(*rig.gateway, f.items, corpus::Scope::chunk, System::vector, f.corpus);
  const auto& cell = report.cells.at({"physics", corpus::Scope::chunk, System::vector});
  EXPECT_EQ(cell.n, 10u);
  EXPECT_EQ(cell.correct, 5u);
  EXPECT_DOUBLE_EQ(cell.accuracy(), 0.5);
}

TEST(ShiftRunTest, RealWorldAnswersScoreZero) {
  auto f = make_fixture(5);
  auto rig = make_rig();
  rig.mock->add_rule([](const llm::PromptRequest& r) -> std::optional<std::string> {
    if (r.task == llm::task::vector_answer) return std::string("A");
    return std::nullopt;
  });
  const auto report = run_ksqa(*rig.gateway, f.items, corpus::Scope::window, System::vector, f.corpus);
  EXPECT_DOUBLE_EQ(report.cells.begin()->second.accuracy(), 0.0);
}

TEST(ShiftRunTest, MissingAnchorsSkippedAndCounted) {
  auto f = make_fixture(5);
  f.items[1].anchor_chunk.ordinal = 999;
  f.items[3].doc_id = "nowhere";
  f.items[3].anchor_chunk.doc_id = "nowhere";
  auto rig = make_synthetic_rig();
  const auto report = run_ksqa(*rig.gateway, f.items, corpus::Scope::chunk, System::vector, f.corpus);
  ASSERT_EQ(report.skipped.size(), 2u);
  EXPECT_EQ(report.skipped[0].item_id, "item1");
  EXPECT_EQ(report.cells.begin()->second.n, f.items.size() - report.skipped.size());
  EXPECT_NE(report.to_text().find("skipped: 2"), std::string::npos);
}

TEST(ShiftRunTest, IndexesSharedAcrossItems) {
  auto f = make_fixture(10);  // every fact appears twice
  auto rig = make_synthetic_rig();
  IndexCache cache;
  auto report = run_ksqa(*rig.gateway, f.items, corpus::Scope::chunk, System::vector, f.corpus, cache);
  EXPECT_EQ(report.indexing_passes, 5u);
  report = run_ksqa(*rig.gateway, f.items, corpus::Scope::document, System::vector, f.corpus, cache);
  EXPECT_EQ(report.indexing_passes, 1u);
  const auto indexing_before = rig.usage()[llm::Phase::indexing];
  report = run_ksqa(*rig.gateway, f.items, corpus::Scope::document, System::vector, f.corpus, cache);
  EXPECT_EQ(report.indexing_passes, 0u);
  EXPECT_EQ(rig.usage()[llm::Phase::indexing], indexing_before);
}

TEST(ShiftRunTest, ScopesNest) {
  auto f = make_fixture(5);
  const auto& chunks = f.corpus.documents.at("phys");
  for (const auto& item : f.items) {
    const auto s = corpus::retrieval_scope(chunks, item.anchor_chunk, corpus::Scope::chunk).chunk_ids;
    const auto m = corpus::retrieval_scope(chunks, item.anchor_chunk, corpus::Scope::window).chunk_ids;
    const auto l = corpus::retrieval_scope(chunks, item.anchor_chunk, corpus::Scope::document).chunk_ids;
    EXPECT_TRUE(std::includes(m.begin(), m.end(), s.begin(), s.end()));
    EXPECT_TRUE(std::includes(l.begin(), l.end(), m.begin(), m.end()));
    EXPECT_LT(s.size(), m.size());
    EXPECT_LT(m.size(), l.size());
  }
}

TEST(ShiftRunTest, EnginePromptsCarryFidelityInstruction) {
  auto f = make_fixture(2);
  for (auto system : {System::vector, System::graph_local, System::no_retrieval}) {
    auto rig = make_synthetic_rig();
    run_ksqa(*rig.gateway, f.items, corpus::Scope::chunk, system, f.corpus);
    bool saw_query = false;
    for (const auto& r : rig.mock->requests()) {
      if (r.phase != llm::Phase::querying) continue;
      saw_query = true;
      EXPECT_EQ(standardize_query_prompt(r.system_text()), r.system_text()) << to_string(system);
      EXPECT_NE(r.system_text().find("Answer strictly"), std::string_view::npos);
    }
    EXPECT_TRUE(saw_query);
  }
}

TEST(ShiftRunTest, RoutedAndGraphSystemsRun) {
  auto f = make_fixture(5);
  auto rig = make_synthetic_rig();
  AccuracyReport all;
  for (auto system : {System::graph_local, System::graph_global, System::routed}) {
    all.merge(run_ksqa(*rig.gateway, f.items, corpus::Scope::window, system, f.corpus));
  }
  EXPECT_EQ(all.cells.size(), 3u);
  for (const auto& [k, c] : all.cells) EXPECT_EQ(c.n, 5u);
  const auto csv = all.to_csv();
  EXPECT_NE(csv.find("physics,medium,routed,5,"), std::string::npos);
}

}  // namespace
}  // namespace classrag::shift
