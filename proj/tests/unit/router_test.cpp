#include <random>

#include <gtest/gtest.h>

#include "classrag/common/error.hpp"
#include "classrag/router/router.hpp"
#include "support.hpp"

namespace classrag::router {
namespace {

using classrag::testing::chunks_from;
using classrag::testing::make_rig;

CorpusStats words(std::uint64_t n) { return {n, n / 500, corpus::Subject::history}; }

TEST(RouterTest, ScriptedVectorReply) {
  auto rig = make_rig();
  rig.mock->script_contains("FORMAT:", "VECTOR");
  const auto d = classify_query(*rig.gateway, "Who wrote it?", words(1000), false);
  EXPECT_EQ(d.engine, EngineKind::vector);
  EXPECT_EQ(d.source, RouteSource::llm);
  EXPECT_EQ(rig.mock->requests().back().tier, llm::ModelTier::router);
}

TEST(RouterTest, HardFailureFallsBackMcqLargeCorpus) {
  auto rig = make_rig();
  rig.mock->fail_always(llm::MockFailure::transport);
  const auto d = classify_query(*rig.gateway, "Which option is right?", words(150'000), true);
  EXPECT_EQ(d.engine, EngineKind::graph_local);
  EXPECT_EQ(d.source, RouteSource::heuristic_fallback);
}

TEST(RouterTest, UnparsableReplyFallsBack) {
  auto rig = make_rig();
  rig.mock->script_contains("FORMAT:", "banana");
  EXPECT_EQ(classify_query(*rig.gateway, "q", words(10), false).source, RouteSource::heuristic_fallback);
}

TEST(RouterTest, AmbiguousReplyFallsBack) {
  auto rig = make_rig();
  rig.mock->script_contains("FORMAT:", "VECTOR or GRAPH_GLOBAL");
  EXPECT_EQ(classify_query(*rig.gateway, "q", words(10), false).source, RouteSource::heuristic_fallback);
}

TEST(RouterTest, ReplyParsing) {
  EXPECT_EQ(parse_route_reply("graph-local"), EngineKind::graph_local);
  EXPECT_EQ(parse_route_reply("  GRAPH_GLOBAL.\n"), EngineKind::graph_global);
  EXPECT_EQ(parse_route_reply("I pick Vector"), EngineKind::vector);
  EXPECT_FALSE(parse_route_reply("graph").has_value());
  EXPECT_FALSE(parse_route_reply("").has_value());
}

TEST(RouterTest, StatsCanBeWithheld) {
  auto rig = make_rig();
  classify_query(*rig.gateway, "q", words(10), false, {.include_stats = false});
  EXPECT_EQ(rig.mock->requests().back().user_text().find("CORPUS WORDS"), std::string_view::npos);
  classify_query(*rig.gateway, "q", words(10), false);
  EXPECT_NE(rig.mock->requests().back().user_text().find("CORPUS WORDS: 10"), std::string_view::npos);
}

// Each row of the fallback table, plus its boundaries.
TEST(HeuristicTest, TableRows) {
  EXPECT_EQ(heuristic_route("anything at all", words(100'000), true).engine, EngineKind::graph_local);
  EXPECT_EQ(heuristic_route("anything at all", words(99'999), true).engine, EngineKind::vector);
  EXPECT_EQ(heuristic_route("Who founded Rome?", words(500'000), false).engine, EngineKind::vector);
  EXPECT_EQ(heuristic_route("What does the whale represent?", words(10), false).engine, EngineKind::vector);
  EXPECT_EQ(heuristic_route("How does the whale represent obsession in the novel as a whole, and why does it "
                            "matter so much?", words(10), false).engine,
            EngineKind::graph_global);
  EXPECT_EQ(heuristic_route("Discuss the themes", words(10), false).engine, EngineKind::graph_global);
  EXPECT_EQ(heuristic_route("Explain osmosis", words(10), false).engine, EngineKind::vector);
  EXPECT_EQ(heuristic_route("Explain osmosis", words(100'000), false).engine, EngineKind::graph_global);
  // 13 words with an interrogative no longer takes the short-question row.
  EXPECT_EQ(heuristic_route("who a b c d e f g h i j k l", words(200'000), false).engine,
            EngineKind::graph_global);
}

TEST(HeuristicTest, TotalityAndDeterminismFuzz) {
  auto rig = make_rig();
  rig.mock->fail_always(llm::MockFailure::transport);
  std::mt19937_64 rng(9);
  const std::vector<std::string> vocab = {"who", "what", "theme", "x", "compare", "", "?", "é", "the", "motif"};
  for (int i = 0; i < 200; ++i) {
    std::string q;
    const auto len = rng() % 20;
    for (std::size_t w = 0; w < len; ++w) q += vocab[rng() % vocab.size()] + " ";
    const CorpusStats stats{rng() % 300'000, rng() % 600, corpus::Subject::science};
    const bool mcq = rng() % 2 == 0;
    const auto d = classify_query(*rig.gateway, q, stats, mcq);
    EXPECT_EQ(d.source, RouteSource::heuristic_fallback);
    EXPECT_EQ(d.engine, heuristic_route(q, stats, mcq).engine);
  }
  EXPECT_EQ(classify_query(*rig.gateway, "", words(0), false).engine, EngineKind::vector);
}

struct Engines {
  classrag::testing::MockRig rig = classrag::testing::make_synthetic_rig();
  std::vector<corpus::Chunk> chunks =
      chunks_from("d", {"Marie Curie studied radium in Paris.", "Isaac Newton described gravity in Cambridge."});
  std::unique_ptr<vector::VectorEngine> vec;
  std::unique_ptr<graph::GraphEngine> graph;

  Engines() {
    vec = std::make_unique<vector::VectorEngine>(*rig.gateway, chunks, vector::build_vector_index(*rig.gateway, chunks));
    graph = std::make_unique<graph::GraphEngine>(*rig.gateway, chunks, graph::build_graph_index(*rig.gateway, chunks));
  }
};

TEST(RouteAndAnswerTest, VectorDecisionTouchesOnlyVector) {
  Engines e;
  EngineSet set{e.vec.get(), e.graph.get()};
  const auto routed = route_and_answer(*e.rig.gateway, "Who studied radium?", set, stats_of(e.chunks, corpus::Subject::science));
  EXPECT_EQ(routed.decision.engine, EngineKind::vector);
  EXPECT_EQ(routed.decision.source, RouteSource::llm);
  EXPECT_EQ(routed.answer.engine, EngineKind::vector);
  // Router call plus the vector engine's single completion.
  EXPECT_EQ(routed.usage.total_llm_calls(), 2u);
  EXPECT_EQ(routed.usage.total_embedding_calls(), 1u);
  const auto tasks = e.rig.mock->requests();
  EXPECT_EQ(tasks[tasks.size() - 2].task, "route");
  EXPECT_EQ(tasks.back().task, "vector_answer");
}

TEST(RouteAndAnswerTest, OverrideSkipsClassifier) {
  Engines e;
  EngineSet set{e.vec.get(), e.graph.get()};
  const auto before = e.rig.mock->completion_count();
  const auto routed = route_and_answer(*e.rig.gateway, "Who studied radium?", set, {}, false, EngineKind::graph_global);
  EXPECT_EQ(routed.decision.source, RouteSource::manual_override);
  EXPECT_EQ(routed.answer.engine, EngineKind::graph_global);
  for (std::size_t i = before; i < e.rig.mock->requests().size(); ++i) {
    EXPECT_NE(e.rig.mock->requests()[i].task, "route");
  }
  std::size_t top = 0;
  for (const auto& s : e.graph->index().summaries) top += s.level == e.graph->index().hierarchy.top_level();
  EXPECT_EQ(routed.usage.total_llm_calls(), top + 1);
}

TEST(RouteAndAnswerTest, MissingIndexThrows) {
  Engines e;
  EngineSet only_vector{e.vec.get(), nullptr};
  EXPECT_THROW(route_and_answer(*e.rig.gateway, "q", only_vector, {}, false, EngineKind::graph_local), IndexMissing);
  EXPECT_THROW(route_and_answer(*e.rig.gateway, "Discuss the overall themes at length please", only_vector,
                                words(10), false),
               IndexMissing);
}

}  // namespace
}  // namespace classrag::router
