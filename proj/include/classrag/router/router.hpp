#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json_fwd.hpp>

#include "classrag/corpus/corpus.hpp"
#include "classrag/engine/answer.hpp"
#include "classrag/graph/graph_engine.hpp"
#include "classrag/llm/gateway.hpp"
#include "classrag/vector/vector_engine.hpp"

namespace classrag::router {

struct CorpusStats {
  std::uint64_t total_words = 0;
  std::uint64_t chunk_count = 0;
  corpus::Subject subject = corpus::Subject::other;
};

CorpusStats stats_of(std::span<const corpus::Chunk> chunks, corpus::Subject subject);

enum class RouteSource { llm, heuristic_fallback, manual_override };

std::string_view to_string(RouteSource source);

struct RouteDecision {
  EngineKind engine = EngineKind::vector;
  RouteSource source = RouteSource::heuristic_fallback;
  std::string rationale;
};

nlohmann::json to_json(const RouteDecision& decision);

// Corpora at or above this size favour the graph engines.
inline constexpr std::uint64_t kLargeCorpusWords = 100'000;
inline constexpr std::size_t kShortQueryWords = 12;

// Deterministic fallback table, first matching row wins:
//   mcq and corpus >= 100K words                -> graph_local
//   <= 12 words with who/what/when/which/where  -> vector
//   mentions theme/motif/overall/represent/compare -> graph_global
//   corpus < 100K words -> vector, else graph_global
RouteDecision heuristic_route(std::string_view query, const CorpusStats& stats, bool mcq);

// VECTOR / GRAPH_LOCAL / GRAPH_GLOBAL (case-insensitive; hyphen or space also
// accepted). nullopt unless exactly one engine is named.
std::optional<EngineKind> parse_route_reply(std::string_view reply);

struct RouterOptions {
  // Include corpus statistics in the routing prompt; the question alone
  // otherwise.
  bool include_stats = true;
};

// One router-tier completion. Never throws: provider failures and unparsable
// replies fall back to heuristic_route.
RouteDecision classify_query(llm::Gateway& gateway, std::string_view query, const CorpusStats& stats,
                             bool mcq, const RouterOptions& options = {});

// Built engines available to the router. Null means the index is not built.
struct EngineSet {
  const vector::VectorEngine* vector = nullptr;
  const graph::GraphEngine* graph = nullptr;
  vector::VectorQueryOptions vector_options;
  graph::LocalSearchOptions local_options;
  graph::GlobalSearchOptions global_options;

  bool has(EngineKind kind) const;
  // Throws IndexMissing when the engine is absent.
  Answer run(EngineKind kind, std::string_view query) const;
};

struct RoutedAnswer {
  RouteDecision decision;
  Answer answer;
  llm::UsageLedger usage;  // provider traffic of this query, router included
};

nlohmann::json to_json(const RoutedAnswer& routed);

// Routes (or honours `override_engine`) and invokes exactly one engine. The
// usage delta is taken from gateway snapshots, so concurrent queries on the
// same gateway blur it.
RoutedAnswer route_and_answer(llm::Gateway& gateway, std::string_view query, const EngineSet& engines,
                              const CorpusStats& stats, bool mcq = false,
                              std::optional<EngineKind> override_engine = std::nullopt,
                              const RouterOptions& options = {});

}  // namespace classrag::router
