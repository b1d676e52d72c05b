#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/graph/knowledge_graph.hpp"

namespace classrag::graph {

// Undirected weighted graph over dense node indices. Self-loops carry the
// internal weight of an aggregated node.
class WeightedGraph {
 public:
  explicit WeightedGraph(std::size_t nodes = 0);

  static WeightedGraph from(const KnowledgeGraph& g);

  // Adds weight to edge {a, b}; a == b adds a self-loop.
  void add_edge(std::size_t a, std::size_t b, double weight);

  std::size_t size() const { return adjacency_.size(); }
  const std::map<std::size_t, double>& neighbors(std::size_t node) const { return adjacency_[node]; }
  double self_loop(std::size_t node) const { return loops_[node]; }
  double degree(std::size_t node) const;  // self-loop counted twice
  double total_weight() const { return total_; }  // m

 private:
  std::vector<std::map<std::size_t, double>> adjacency_;  // excludes self-loops
  std::vector<double> loops_;
  double total_ = 0.0;
};

// Newman modularity of `membership` (node -> any community label).
double modularity(const WeightedGraph& g, const std::vector<std::size_t>& membership);

// Community ids are the smallest node index of the community, so they are
// stable across levels: a level L+1 community takes the id of its smallest
// level L member.
struct CommunityHierarchy {
  std::vector<std::vector<std::size_t>> levels;  // levels[L][node] = community id
  // parents[L][community at L] = community at L+1 containing it.
  std::vector<std::map<std::size_t, std::size_t>> parents;

  std::size_t top_level() const { return levels.empty() ? 0 : levels.size() - 1; }
  // Distinct community ids at `level`, ascending.
  std::vector<std::size_t> communities(std::size_t level) const;
  // Member node indices of `community` at `level`, ascending.
  std::vector<std::size_t> members(std::size_t level, std::size_t community) const;

  nlohmann::json to_json() const;
  static CommunityHierarchy from_json(const nlohmann::json& j);
};

struct CommunityOptions {
  std::size_t max_levels = 3;
  std::uint64_t seed = 42;
  double min_gain = 1e-6;
};

// Greedy modularity maximization with local moves (Louvain style). Level 0
// clusters the graph itself; each further level clusters the quotient graph
// of the level below. Node visiting order is a seeded shuffle; ties go to the
// smaller community id. Throws InvalidArgument for an empty graph.
CommunityHierarchy detect_communities(const WeightedGraph& g, const CommunityOptions& options = {});

}  // namespace classrag::graph
