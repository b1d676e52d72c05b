#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "classrag/common/error.hpp"
#include "classrag/common/text.hpp"
#include "classrag/qagen/qagen.hpp"
#include "support.hpp"

namespace classrag::qagen {
namespace {

using classrag::testing::make_rig;
using classrag::testing::make_synthetic_rig;

// Every summarize call answers with the same 1,000-character text.
void fixed_summaries(llm::MockProvider& mock) {
  mock.add_rule([](const llm::PromptRequest& r) -> std::optional<std::string> {
    if (r.task != "summarize") return std::nullopt;
    return std::string(1000, 's');
  });
}

// Layer sizes the grouping rule should produce, computed by simulating the
// recursion on sizes alone: ceil(n / 10) while every group fits the budget.
std::vector<std::size_t> simulated_layers(std::size_t n, std::size_t chars_per_summary) {
  std::vector<std::size_t> sizes{n};
  while (n > 1) {
    const std::size_t per_group = std::min<std::size_t>(10, std::max<std::size_t>(2, 35'000 / chars_per_summary));
    n = (n + per_group - 1) / per_group;
    sizes.push_back(n);
  }
  return sizes;
}

TEST(SummaryTreeTest, TwoHundredSectionsGiveTwoHundredTwentyTwoOne) {
  auto rig = make_rig();
  fixed_summaries(*rig.mock);
  const std::vector<std::string> sections(200, "section text");
  const auto tree = hierarchical_summarize(*rig.gateway, sections);
  EXPECT_EQ(tree.layer_sizes(), (std::vector<std::size_t>{200, 20, 2, 1}));
  EXPECT_EQ(tree.layer_sizes(), simulated_layers(200, 1000));
  EXPECT_EQ(rig.usage()[llm::Phase::generation].llm_calls, 223u);
  EXPECT_EQ(tree.root().size(), 1000u);
}

TEST(SummaryTreeTest, SmallInputResummarizesOnceToRoot) {
  auto rig = make_rig();
  fixed_summaries(*rig.mock);
  const std::vector<std::string> sections(8, "x");  // 8,000 chars of summaries
  const auto tree = hierarchical_summarize(*rig.gateway, sections);
  EXPECT_EQ(tree.layer_sizes(), (std::vector<std::size_t>{8, 1}));
}

TEST(SummaryTreeTest, SingleSectionIsItsOwnRoot) {
  auto rig = make_rig();
  rig.mock->script_contains("only section", "root text");
  const std::vector<std::string> sections = {"only section"};
  const auto tree = hierarchical_summarize(*rig.gateway, sections);
  EXPECT_EQ(tree.layer_sizes(), std::vector<std::size_t>{1});
  EXPECT_EQ(tree.root(), "root text");
  EXPECT_EQ(rig.mock->completion_count(), 1u);
}

TEST(SummaryTreeTest, LongSummariesShrinkGroupsToFitBudget) {
  // 12,000-char summaries: only two fit a 35,000 budget, so groups of 2.
  auto rig = make_rig();
  rig.mock->add_rule([](const llm::PromptRequest&) { return std::optional<std::string>(std::string(12'000, 'y')); });
  const std::vector<std::string> sections(9, "x");
  const auto tree = hierarchical_summarize(*rig.gateway, sections, {.parallelism = 1});
  EXPECT_EQ(tree.layer_sizes(), simulated_layers(9, 12'000));
  for (std::size_t l = 0; l + 1 < tree.layers.size(); ++l) EXPECT_LT(tree.layers[l + 1].size(), tree.layers[l].size());
}

TEST(SummaryTreeTest, GroupingStrictlyShrinksForAnySize) {
  for (std::size_t n = 2; n < 60; ++n) {
    for (const std::size_t len : {10u, 5'000u, 20'000u, 40'000u}) {
      const std::vector<std::string> texts(n, std::string(len, 'z'));
      const auto groups = group_summaries(texts);
      EXPECT_LT(groups.size(), n);
      std::size_t next = 0;
      for (const auto& g : groups) {
        EXPECT_LE(g.size(), 10u);
        for (const auto i : g) EXPECT_EQ(i, next++);
      }
      EXPECT_EQ(next, n);
    }
  }
}

TEST(SummaryTreeTest, FailureLeavesCheckpointThatResumes) {
  auto rig = make_rig();
  fixed_summaries(*rig.mock);
  const std::vector<std::string> sections(25, "section");
  SummaryTree tree;
  rig.mock->fail_always(llm::MockFailure::refusal);
  EXPECT_THROW(hierarchical_summarize(*rig.gateway, sections, tree), ProviderRefusal);
  EXPECT_FALSE(tree.complete());
  rig.mock->fail_always(std::nullopt);

  // Finish a few nodes, fail again, then resume to completion.
  rig.mock->fail_next(2, llm::MockFailure::refusal);
  EXPECT_THROW(hierarchical_summarize(*rig.gateway, sections, tree, {.parallelism = 1}), ProviderRefusal);
  const auto round_trip = SummaryTree::from_json(tree.to_json());
  const auto calls_before = rig.mock->completion_count();
  auto resumed = round_trip;
  hierarchical_summarize(*rig.gateway, sections, resumed, {.parallelism = 1});
  EXPECT_TRUE(resumed.complete());
  EXPECT_EQ(resumed.layer_sizes(), (std::vector<std::size_t>{25, 3, 1}));
  // Only missing nodes are generated on resume.
  std::size_t missing = 0;
  for (const auto& n : round_trip.layers[0]) missing += n ? 0 : 1;
  EXPECT_EQ(rig.mock->completion_count() - calls_before, missing + 3 + 1);
}

TEST(QaParseTest, WellFormedAndMalformedBlocks) {
  std::size_t malformed = 0;
  const auto drafts = parse_qa_reply(
      "Q: What is osmosis?\nA: Diffusion of water.\n\nQ: Missing answer?\n\nA: orphan answer\n\n"
      "Q: Who?\nA: Someone\nwith a second line.\n",
      &malformed);
  ASSERT_EQ(drafts.size(), 2u);
  EXPECT_EQ(malformed, 2u);
  EXPECT_EQ(drafts[1].answer, "Someone with a second line.");
}

TEST(ScopedQuestionTest, ScriptedBlocksBecomeAnchoredPairs) {
  auto rig = make_rig();
  rig.mock->script_contains("SCOPE: specific", "Q: a?\nA: 1\n\nQ: b?\nA: 2\n\nQ: c?\nA: 3\n");
  const std::vector<std::string> neighbors = {"prev summary", "next summary"};
  const ScopedTarget target{QuestionType::specific, {"bio", 4}, "target text"};
  const auto pairs = gen_scoped_questions(*rig.gateway, "bio", target, neighbors, "global", 3);
  ASSERT_EQ(pairs.size(), 3u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.type, QuestionType::specific);
    EXPECT_EQ(p.anchor, (corpus::UnitId{"bio", 4}));
    EXPECT_NO_THROW(validate(p));
  }
  const auto prompt = std::string(rig.mock->requests().back().user_text());
  EXPECT_NE(prompt.find("target text"), std::string::npos);
  EXPECT_NE(prompt.find("prev summary"), std::string::npos);
  EXPECT_NE(prompt.find("global"), std::string::npos);
}

TEST(ScopedQuestionTest, SectionTargetAndMalformedBlock) {
  auto rig = make_rig();
  rig.mock->script_contains("SCOPE: sectional", "Q: a?\nA: 1\n\nQ: broken\n\nQ: c?\nA: 3\n");
  const ScopedTarget target{QuestionType::sectional, {"bio", 1}, "section text"};
  const auto pairs = gen_scoped_questions(*rig.gateway, "bio", target, {}, "global", 3);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].type, QuestionType::sectional);
}

TEST(ScopedQuestionTest, UnparsableReplyGivesNothing) {
  auto rig = make_rig();
  rig.mock->script_contains("SCOPE: specific", "I refuse.");
  const ScopedTarget target{QuestionType::specific, {"bio", 0}, "x"};
  EXPECT_TRUE(gen_scoped_questions(*rig.gateway, "bio", target, {}, "g", 2).empty());
}

TEST(ThematicTest, QuotaTypeAndMalformedTolerance) {
  auto rig = make_rig();
  rig.mock->script_contains("SCOPE: thematic", "Q: theme one?\nA: yes\n\nA: stray\n\nQ: theme two?\nA: also\n");
  const auto pairs = gen_thematic(*rig.gateway, "lit", "the global summary", 2);
  ASSERT_EQ(pairs.size(), 2u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.type, QuestionType::thematic);
    EXPECT_FALSE(p.anchor.has_value());
  }
  EXPECT_EQ(gen_thematic(*rig.gateway, "lit", "g", 1).size(), 1u);
}

TEST(FilterTest, KeepRejectAndFailClosed) {
  EXPECT_TRUE(parse_filter("KEEP").keep);
  const auto rejected = parse_filter("REJECT: trivial");
  EXPECT_FALSE(rejected.keep);
  EXPECT_EQ(rejected.reason, "trivial");
  const auto junk = parse_filter("looks fine to me");
  EXPECT_FALSE(junk.keep);
  EXPECT_EQ(junk.reason, "unparsable");

  auto rig = make_rig();
  rig.mock->script_contains("good question", "KEEP");
  rig.mock->script_contains("bad question", "REJECT: unanswerable");
  std::vector<QAPair> pairs(3);
  pairs[0].question = "good question";
  pairs[1].question = "bad question";
  pairs[2].question = "odd question";
  const std::vector<std::string> sources(3, "src");
  const auto result = filter_qa(*rig.gateway, pairs, sources, 1);
  ASSERT_EQ(result.kept.size(), 1u);
  ASSERT_EQ(result.rejected.size(), 2u);
  EXPECT_EQ(result.rejected[0].second, "unanswerable");
  EXPECT_EQ(result.rejected[1].second, "unparsable");
  EXPECT_EQ(rig.mock->requests().back().tier, llm::ModelTier::judge);
}

TEST(FilterTest, ProviderErrorRejects) {
  auto rig = make_rig();
  rig.mock->fail_always(llm::MockFailure::transport);
  std::vector<QAPair> pairs(1);
  pairs[0].question = "q?";
  const std::vector<std::string> sources = {"s"};
  const auto result = filter_qa(*rig.gateway, pairs, sources);
  ASSERT_EQ(result.rejected.size(), 1u);
  EXPECT_NE(result.rejected[0].second.find("TransportError"), std::string::npos);
}

std::string prose_document(std::size_t sentences) {
  static const std::vector<std::string> subjects = {"The river", "A merchant", "The old castle", "Every farmer",
                                                    "The council", "Her brother", "The northern army"};
  static const std::vector<std::string> verbs = {"carried grain toward", "argued bitterly with", "slowly rebuilt",
                                                 "quietly watched", "paid heavy taxes to", "sailed along"};
  static const std::vector<std::string> objects = {"the southern port", "the young king", "the flooded valley",
                                                   "the abbey walls", "the distant islands", "the silver mines"};
  std::string out;
  for (std::size_t i = 0; i < sentences; ++i) {
    out += subjects[i % subjects.size()] + " " + verbs[(i / 3) % verbs.size()] + " " +
           objects[(i / 7) % objects.size()] + " during year " + std::to_string(1200 + i) + ". ";
  }
  return out;
}

corpus::CorpusDocument history_doc() {
  return corpus::ingest("hist", "History", corpus::Subject::history, prose_document(400));
}

TEST(PipelineTest, EverythingAcceptsMeetsQuotas) {
  auto rig = make_synthetic_rig();
  PipelineOptions options;
  options.quotas = {5, 2, 1};
  options.chunk_size_words = 100;
  const auto run = run_pipeline(*rig.gateway, history_doc(), options);
  QADataset d{run.pairs, {}};
  EXPECT_NO_THROW(d.validate());
  const auto counts = d.counts();
  EXPECT_EQ(counts.specific, 5u);
  EXPECT_EQ(counts.sectional, 2u);
  EXPECT_EQ(counts.thematic, 1u);
  EXPECT_FALSE(run.report.shortfall[0] || run.report.shortfall[1] || run.report.shortfall[2]);
  for (const auto& p : run.pairs) {
    if (p.type == QuestionType::specific) EXPECT_LT(p.anchor->ordinal, run.report.chunk_count);
    if (p.type == QuestionType::sectional) EXPECT_LT(p.anchor->ordinal, run.report.section_count);
  }
}

TEST(PipelineTest, RejectingFilterGivesEmptyDatasetAndShortfall) {
  auto rig = make_synthetic_rig();
  rig.mock->add_rule([](const llm::PromptRequest& r) -> std::optional<std::string> {
    if (r.task == "qa_filter") return "REJECT: no";
    return std::nullopt;
  });
  PipelineOptions options;
  options.quotas = {2, 1, 1};
  options.chunk_size_words = 100;
  const auto run = run_pipeline(*rig.gateway, history_doc(), options);
  EXPECT_TRUE(run.pairs.empty());
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_TRUE(run.report.shortfall[t]);
    EXPECT_EQ(run.report.rounds[t], 3u);
  }
}

TEST(PipelineTest, SameSeedSameIdsDifferentSeedDifferentTargets) {
  auto ids = [](std::uint64_t seed) {
    auto rig = make_synthetic_rig();
    PipelineOptions options;
    options.quotas = {4, 1, 1};
    options.chunk_size_words = 50;
    options.seed = seed;
    std::set<std::string> out;
    for (const auto& p : run_pipeline(*rig.gateway, history_doc(), options).pairs) out.insert(p.qa_id);
    return out;
  };
  EXPECT_EQ(ids(11), ids(11));
  EXPECT_NE(ids(11), ids(12));
}

TEST(PipelineTest, ScreenedSectionsAreNeverTargets) {
  auto rig = make_synthetic_rig();
  const auto doc = corpus::ingest("b", "B", corpus::Subject::science,
                                  "Copyright 2020 Example Press. All rights reserved. ISBN 123. " + prose_document(200));
  PipelineOptions options;
  options.quotas = {6, 1, 0};
  options.chunk_size_words = 30;  // the first section holds the copyright text
  const auto run = run_pipeline(*rig.gateway, doc, options);
  EXPECT_EQ(run.report.screened_out, 1u);
  for (const auto& p : run.pairs) {
    if (p.type == QuestionType::specific) EXPECT_GE(p.anchor->ordinal, corpus::kChunksPerSection);
    if (p.type == QuestionType::sectional) EXPECT_GE(p.anchor->ordinal, 1u);
  }
}

TEST(DatasetTest, JsonlRoundTripAndAliasLoader) {
  auto rig = make_synthetic_rig();
  PipelineOptions options;
  options.quotas = {2, 1, 1};
  options.chunk_size_words = 100;
  const std::vector<corpus::CorpusDocument> docs = {history_doc()};
  const auto d = generate_dataset(*rig.gateway, docs, options);
  std::stringstream ss;
  write_jsonl(ss, d);
  const auto text = ss.str();
  const auto back = read_jsonl(ss);
  std::stringstream again;
  write_jsonl(again, back);
  EXPECT_EQ(again.str(), text);
  EXPECT_EQ(d.manifest.at("counts").at("specific"), 2);
  EXPECT_EQ(d.manifest.at("summary_char_threshold"), 35000);

  const auto p = qa_from_json(nlohmann::json::parse(
      R"({"id": 17, "Question": "Why?", "answer": "Because.", "type": "Thematic", "document": "x"})"));
  EXPECT_EQ(p.qa_id, "17");
  EXPECT_EQ(p.type, QuestionType::thematic);
  EXPECT_THROW(qa_from_json(nlohmann::json::parse(R"({"question": "q", "type": "specific"})")), FormatError);
}

TEST(DatasetTest, DuplicateIdsRejected) {
  QAPair p;
  p.question = "q";
  p.type = QuestionType::thematic;
  p.qa_id = "same";
  QADataset d{{p, p}, {}};
  EXPECT_THROW(d.validate(), FormatError);
}

}  // namespace
}  // namespace classrag::qagen
