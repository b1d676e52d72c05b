#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "classrag/common/error.hpp"
#include "classrag/vector/vector_engine.hpp"
#include "support.hpp"

namespace classrag::vector {
namespace {

using classrag::testing::chunks_from;
using classrag::testing::make_rig;

std::vector<corpus::Chunk> random_chunks(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> vocab = {"cell", "atom", "war", "king", "river", "poem", "light",
                                                 "energy", "treaty", "empire", "verse", "orbit", "mass",
                                                 "charge", "field", "wave"};
  std::mt19937_64 rng(seed);
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < n; ++i) {
    // Every tenth chunk repeats an earlier one to force exact score ties.
    if (i % 10 == 9) {
      texts.push_back(texts[i - 5]);
      continue;
    }
    std::string t;
    for (int w = 0; w < 6; ++w) t += vocab[rng() % vocab.size()] + " ";
    texts.push_back(t);
  }
  return chunks_from("rand", texts);
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return (na == 0 || nb == 0) ? 0.0 : dot / std::sqrt(na * nb);
}

TEST(VectorIndexTest, OneEntryPerChunkAndNoCompletions) {
  auto rig = make_rig();
  const auto chunks = random_chunks(10, 1);
  const auto index = build_vector_index(*rig.gateway, chunks);
  EXPECT_EQ(index.entries.size(), 10u);
  EXPECT_EQ(rig.usage()[llm::Phase::indexing].llm_calls, 0u);
  EXPECT_GT(rig.usage()[llm::Phase::indexing].embedding_calls, 0u);
}

TEST(VectorIndexTest, RebuildIsByteIdenticalAndRoundTrips) {
  const auto chunks = random_chunks(30, 2);
  auto rig1 = make_rig();
  auto rig2 = make_rig();
  const auto a = build_vector_index(*rig1.gateway, chunks).to_json().dump();
  const auto b = build_vector_index(*rig2.gateway, chunks).to_json().dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(VectorIndex::from_json(nlohmann::json::parse(a)).to_json().dump(), a);
}

TEST(VectorIndexTest, EmptyChunkListRejected) {
  auto rig = make_rig();
  EXPECT_THROW(build_vector_index(*rig.gateway, std::vector<corpus::Chunk>{}), InvalidArgument);
}

TEST(TopKTest, IdenticalAndOrthogonalVectors) {
  VectorIndex index;
  index.dimension = 2;
  index.entries = {{{"d", 1}, {{1, 0}}}, {{"d", 2}, {{0, 1}}}};
  const auto hits = top_k(index, {{1, 0}}, 1);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].chunk, (corpus::ChunkId{"d", 1}));
  EXPECT_DOUBLE_EQ(hits[0].score, 1.0);
  EXPECT_EQ(hits[0].rank, 1u);
  const auto both = top_k(index, {{1, 0}}, 5);
  ASSERT_EQ(both.size(), 2u);
  EXPECT_NEAR(both[1].score, 0.0, 1e-12);
}

TEST(TopKTest, NegativeScoresAreKept) {
  VectorIndex index;
  index.dimension = 2;
  index.entries = {{{"d", 0}, {{-1, 0}}}};
  const auto hits = top_k(index, {{1, 0}}, 3);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_DOUBLE_EQ(hits[0].score, -1.0);
}

TEST(TopKTest, MatchesBruteForceRanking) {
  auto rig = make_rig();
  const auto chunks = random_chunks(200, 7);
  const auto index = build_vector_index(*rig.gateway, chunks);
  for (const std::string query : {"cell energy", "king treaty empire", "wave", "unrelated zebra"}) {
    const auto q = rig.gateway->embed_one(query, llm::Phase::querying);
    std::vector<std::pair<double, std::size_t>> oracle;
    for (std::size_t i = 0; i < index.entries.size(); ++i) {
      oracle.emplace_back(oracle_cosine(q.values, index.entries[i].embedding.values), i);
    }
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (const std::size_t k : {1u, 8u, 100u, 200u, 500u}) {
      const auto hits = top_k(index, q, k);
      ASSERT_EQ(hits.size(), std::min<std::size_t>(k, 200));
      for (std::size_t r = 0; r < hits.size(); ++r) {
        EXPECT_EQ(hits[r].chunk.ordinal, oracle[r].second) << query << " k=" << k << " r=" << r;
        EXPECT_NEAR(hits[r].score, oracle[r].first, 1e-12);
        EXPECT_EQ(hits[r].rank, r + 1);
      }
    }
  }
}

TEST(TopKTest, QueryDimensionMismatchThrows) {
  VectorIndex index;
  index.dimension = 2;
  index.entries = {{{"d", 0}, {{1, 0}}}};
  EXPECT_THROW(top_k(index, {{1, 0, 0}}, 1), DimensionMismatch);
}

TEST(VectorEngineTest, OneCompletionAndOneQueryEmbedding) {
  auto rig = make_rig();
  const auto chunks = random_chunks(20, 3);
  VectorEngine engine(*rig.gateway, chunks, build_vector_index(*rig.gateway, chunks));
  rig.mock->add_rule([](const llm::PromptRequest& r) -> std::optional<std::string> {
    // Echo the first passage id.
    const auto text = std::string(r.user_text());
    const auto open = text.find("PASSAGE [");
    if (open == std::string::npos) return std::nullopt;
    const auto close = text.find(']', open);
    return "See " + text.substr(open + 8, close - open - 7) + " and [other#1].";
  });
  const auto before = rig.usage();
  const auto answer = engine.answer("cell energy", {.k = 4});
  const auto delta = rig.usage().since(before);
  EXPECT_EQ(delta[llm::Phase::querying].llm_calls, 1u);
  EXPECT_EQ(delta[llm::Phase::querying].embedding_calls, 1u);
  EXPECT_EQ(answer.engine, EngineKind::vector);
  EXPECT_EQ(answer.context_chunk_ids.size(), 4u);
  ASSERT_EQ(answer.cited_chunk_ids.size(), 1u);
  EXPECT_EQ(answer.cited_chunk_ids[0], answer.context_chunk_ids[0]);

  const auto prompt = rig.mock->requests().back();
  EXPECT_EQ(prompt.tier, llm::ModelTier::generator);
  EXPECT_NE(prompt.user_text().find("cell energy"), std::string_view::npos);
  for (const auto& id : answer.context_chunk_ids) {
    EXPECT_NE(prompt.user_text().find("[" + id.str() + "]"), std::string_view::npos);
  }
}

TEST(VectorEngineTest, ZeroKThrowsWithoutProviderCalls) {
  auto rig = make_rig();
  const auto chunks = random_chunks(5, 4);
  VectorEngine engine(*rig.gateway, chunks, build_vector_index(*rig.gateway, chunks));
  const auto before = rig.usage();
  EXPECT_THROW(engine.answer("q", {.k = 0}), InvalidK);
  EXPECT_EQ(rig.usage(), before);
}

TEST(VectorEngineTest, FingerprintMismatchRejected) {
  auto rig = make_rig();
  auto chunks = random_chunks(5, 5);
  auto index = build_vector_index(*rig.gateway, chunks);
  chunks[0].text = "changed";
  EXPECT_THROW(VectorEngine(*rig.gateway, chunks, index), FingerprintMismatch);
}

TEST(VectorEngineTest, PolicyRewritesSystemPrompt) {
  auto rig = make_rig();
  const auto chunks = random_chunks(5, 6);
  VectorEngine engine(*rig.gateway, chunks, build_vector_index(*rig.gateway, chunks));
  VectorQueryOptions options;
  options.policy = [](std::string_view p) { return "POLICY\n" + std::string(p); };
  engine.answer("q", options);
  EXPECT_EQ(rig.mock->requests().back().system_text().substr(0, 7), "POLICY\n");
}

TEST(CitationTest, OnlyAllowedIdsInFirstSeenOrder) {
  const std::vector<corpus::ChunkId> allowed = {{"a", 1}, {"a", 2}, {"b", 0}};
  const auto got = parse_citations("x [b#0] y [a#2, a#1] z [a#9] [b#0]", allowed);
  EXPECT_EQ(got, (std::vector<corpus::ChunkId>{{"b", 0}, {"a", 2}, {"a", 1}}));
}

}  // namespace
}  // namespace classrag::vector
