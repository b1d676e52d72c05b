#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/corpus/corpus.hpp"

namespace classrag {

enum class EngineKind { vector, graph_local, graph_global };

std::string_view to_string(EngineKind kind);
// Accepts "vector", "graph_local"/"graph-local", "graph_global"/"graph-global".
std::optional<EngineKind> parse_engine(std::string_view name);

struct Answer {
  std::string text;
  std::vector<corpus::ChunkId> cited_chunk_ids;   // citations found in the reply
  std::vector<corpus::ChunkId> context_chunk_ids; // chunks placed in the prompt
  EngineKind engine = EngineKind::vector;
  double latency_ms = 0.0;
};

nlohmann::json to_json(const Answer& answer);

// Rewrites an engine's system prompt at query time (e.g. to enforce source
// fidelity). Identity when empty.
using PromptPolicy = std::function<std::string(std::string_view)>;

inline std::string apply_policy(const PromptPolicy& policy, std::string_view prompt) {
  return policy ? policy(prompt) : std::string(prompt);
}

// "[doc#n]" citations in `reply`, restricted to `allowed`, in first-seen order.
std::vector<corpus::ChunkId> parse_citations(std::string_view reply,
                                             const std::vector<corpus::ChunkId>& allowed);

}  // namespace classrag
