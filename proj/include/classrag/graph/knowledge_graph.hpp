#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/corpus/corpus.hpp"

namespace classrag::llm {
class Gateway;
}

namespace classrag::graph {

struct EntityMention {
  std::string name;
  std::string kind;
  std::string description;
  corpus::ChunkId chunk;
};

struct RelationMention {
  std::string source;
  std::string target;
  std::string description;
  corpus::ChunkId chunk;
};

struct Extraction {
  std::vector<EntityMention> entities;
  std::vector<RelationMention> relations;
  std::size_t skipped_lines = 0;  // non-blank lines that did not parse
};

// Parses "ENTITY|name|kind|description" and "RELATION|src|dst|description"
// lines. Blank lines are ignored; anything else malformed is counted and
// skipped.
Extraction parse_extraction(std::string_view reply, const corpus::ChunkId& chunk);

// One generator completion over the chunk text. Throws InvalidArgument for an
// empty chunk without calling the provider. An unparsable reply yields an
// empty extraction and a warning.
Extraction extract_units(llm::Gateway& gateway, const corpus::Chunk& chunk);

inline constexpr std::string_view kInferredKind = "inferred";

struct EntityNode {
  std::string canonical_name;
  std::string kind;
  std::vector<std::string> descriptions;
  std::set<corpus::ChunkId> source_chunks;

  bool placeholder() const { return kind == kInferredKind && descriptions.empty(); }
  std::string description() const;  // descriptions joined
};

// Undirected; source < target lexicographically.
struct RelationEdge {
  std::string source;
  std::string target;
  std::string description;
  double weight = 0.0;  // number of merged mentions
  std::set<corpus::ChunkId> source_chunks;
};

struct KnowledgeGraph {
  std::vector<EntityNode> nodes;   // sorted by canonical_name
  std::vector<RelationEdge> edges; // sorted by (source, target)

  std::optional<std::size_t> find(std::string_view canonical) const;
  // Neighbor node indices of `node`, ascending.
  std::vector<std::size_t> neighbors(std::size_t node) const;

  nlohmann::json to_json() const;
  static KnowledgeGraph from_json(const nlohmann::json& j);
};

// Lowercase, whitespace-collapsed name used to merge mentions.
std::string canonical_name(std::string_view name);

// Merges mentions by canonical name. Duplicate relations merge into one edge
// whose weight is the mention count. Relation endpoints never seen as
// entities become placeholder nodes of kind "inferred". Self-relations are
// dropped.
KnowledgeGraph build_graph(std::span<const Extraction> extractions);

}  // namespace classrag::graph
