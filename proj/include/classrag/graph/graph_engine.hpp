#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/corpus/corpus.hpp"
#include "classrag/engine/answer.hpp"
#include "classrag/graph/communities.hpp"
#include "classrag/graph/knowledge_graph.hpp"
#include "classrag/llm/gateway.hpp"

namespace classrag::graph {

// Characters allowed per prompt section.
inline constexpr std::size_t kContextBudget = 12000;

struct CommunitySummary {
  std::size_t level = 0;
  std::size_t community_id = 0;
  std::string text;
  std::vector<std::string> members;  // canonical names, sorted
  bool generated = false;            // false: copied from a singleton's description
  bool missing = false;              // generation failed; query time falls back
};

struct SummaryOptions {
  std::size_t min_size = 2;
  std::size_t parallelism = 4;
};

// One generator completion per community with at least min_size members, at
// every level. Smaller communities reuse their node description. Failed
// completions are recorded as missing summaries.
std::vector<CommunitySummary> summarize_communities(llm::Gateway& gateway, const KnowledgeGraph& graph,
                                                    const CommunityHierarchy& hierarchy,
                                                    const SummaryOptions& options = {});

// Text a query sees for a summary: the summary itself, or member descriptions
// when it is missing.
std::string summary_or_fallback(const CommunitySummary& summary, const KnowledgeGraph& graph);

struct GraphIndex {
  static constexpr int kFormatVersion = 1;

  std::string fingerprint;
  KnowledgeGraph graph;
  CommunityHierarchy hierarchy;
  std::vector<CommunitySummary> summaries;  // sorted by (level, community_id)
  std::vector<llm::EmbeddingVector> entity_embeddings;  // parallel to graph.nodes

  const CommunitySummary* summary(std::size_t level, std::size_t community) const;

  nlohmann::json to_json() const;
  static GraphIndex from_json(const nlohmann::json& j);
};

struct GraphBuildOptions {
  std::size_t parallelism = 4;
  CommunityOptions communities;
  SummaryOptions summaries;
};

// Extraction over every chunk, graph assembly, community detection,
// summarization and entity-description embeddings.
GraphIndex build_graph_index(llm::Gateway& gateway, std::span<const corpus::Chunk> chunks,
                             const GraphBuildOptions& options = {});

// Text embedded for an entity: name plus its descriptions.
std::string entity_text(const EntityNode& node);

struct LocalSearchOptions {
  std::size_t top_entities = 5;
  std::size_t max_source_chunks = 4;
  PromptPolicy policy;
};

struct GlobalSearchOptions {
  std::optional<std::size_t> level;  // default: top level
  std::size_t parallelism = 4;
  PromptPolicy policy;
};

struct LocalContext {
  std::vector<std::string> entities;  // canonical names placed in the prompt
  std::vector<std::size_t> communities;
  std::vector<corpus::ChunkId> chunks;
  std::string prompt;
};

struct GlobalPartial {
  std::size_t community_id = 0;
  int score = 0;
  std::string text;
};

// Parses the trailing "SCORE: <n>" line of a map reply. Returns nullopt when
// absent or outside 0..100.
std::optional<int> parse_score(std::string_view reply);
// Map reply without its score line.
std::string strip_score(std::string_view reply);

class GraphEngine {
 public:
  // Throws FingerprintMismatch when `chunks` are not the indexed ones.
  GraphEngine(llm::Gateway& gateway, std::vector<corpus::Chunk> chunks, GraphIndex index);

  // Embeds the query and assembles the grounding context; no completion.
  LocalContext local_context(std::string_view query, const LocalSearchOptions& options = {}) const;
  // One query embedding plus one completion. Empty graph throws NoGraph.
  Answer local_search(std::string_view query, const LocalSearchOptions& options = {}) const;
  // One map completion per summary at the level plus one reduce completion.
  // Throws NoEvidence when every shard is dropped.
  Answer global_search(std::string_view query, const GlobalSearchOptions& options = {}) const;

  const GraphIndex& index() const { return index_; }

 private:
  const corpus::Chunk* chunk(const corpus::ChunkId& id) const;

  llm::Gateway* gateway_;
  std::vector<corpus::Chunk> chunks_;
  GraphIndex index_;
};

}  // namespace classrag::graph
