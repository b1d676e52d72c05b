#include "classrag/engine/answer.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace classrag {

std::string_view to_string(EngineKind kind) {
  switch (kind) {
    case EngineKind::vector: return "vector";
    case EngineKind::graph_local: return "graph_local";
    case EngineKind::graph_global: return "graph_global";
  }
  return "vector";
}

std::optional<EngineKind> parse_engine(std::string_view name) {
  if (name == "vector") return EngineKind::vector;
  if (name == "graph_local" || name == "graph-local") return EngineKind::graph_local;
  if (name == "graph_global" || name == "graph-global") return EngineKind::graph_global;
  return std::nullopt;
}

nlohmann::json to_json(const Answer& answer) {
  nlohmann::json cited = nlohmann::json::array();
  for (const auto& id : answer.cited_chunk_ids) cited.push_back(id.str());
  nlohmann::json context = nlohmann::json::array();
  for (const auto& id : answer.context_chunk_ids) context.push_back(id.str());
  return {{"engine", to_string(answer.engine)},
          {"text", answer.text},
          {"cited_chunk_ids", cited},
          {"context_chunk_ids", context},
          {"latency_ms", answer.latency_ms}};
}

std::vector<corpus::ChunkId> parse_citations(std::string_view reply,
                                             const std::vector<corpus::ChunkId>& allowed) {
  std::vector<corpus::ChunkId> out;
  std::size_t pos = 0;
  while ((pos = reply.find('[', pos)) != std::string_view::npos) {
    const auto close = reply.find(']', pos);
    if (close == std::string_view::npos) break;
    const auto inner = reply.substr(pos + 1, close - pos - 1);
    // A bracket may hold several ids: "[a#1, a#2]".
    std::size_t start = 0;
    while (start <= inner.size()) {
      auto comma = inner.find(',', start);
      if (comma == std::string_view::npos) comma = inner.size();
      auto token = inner.substr(start, comma - start);
      while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
      while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
      if (auto id = corpus::UnitId::parse(token)) {
        const bool known = std::find(allowed.begin(), allowed.end(), *id) != allowed.end();
        const bool seen = std::find(out.begin(), out.end(), *id) != out.end();
        if (known && !seen) out.push_back(*id);
      }
      start = comma + 1;
    }
    pos = close + 1;
  }
  return out;
}

}  // namespace classrag
