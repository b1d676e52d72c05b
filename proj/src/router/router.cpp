#include "classrag/router/router.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/tasks.hpp"
#include "prompt_assets.hpp"

namespace classrag::router {

CorpusStats stats_of(std::span<const corpus::Chunk> chunks, corpus::Subject subject) {
  CorpusStats s;
  s.subject = subject;
  s.chunk_count = chunks.size();
  for (const auto& c : chunks) s.total_words += c.word_count();
  return s;
}

std::string_view to_string(RouteSource source) {
  switch (source) {
    case RouteSource::llm: return "llm";
    case RouteSource::heuristic_fallback: return "heuristic_fallback";
    case RouteSource::manual_override: return "manual_override";
  }
  return "llm";
}

nlohmann::json to_json(const RouteDecision& d) {
  return {{"engine", to_string(d.engine)}, {"source", to_string(d.source)}, {"rationale", d.rationale}};
}

RouteDecision heuristic_route(std::string_view query, const CorpusStats& stats, bool mcq) {
  static const std::set<std::string> kFactWords = {"who", "what", "when", "which", "where"};
  const bool large = stats.total_words >= kLargeCorpusWords;
  RouteDecision d;
  d.source = RouteSource::heuristic_fallback;
  if (mcq && large) {
    d.engine = EngineKind::graph_local;
    d.rationale = "multiple-choice over a large corpus";
    return d;
  }
  const auto words = text::split_whitespace(query);
  const auto tokens = text::word_tokens(query);
  const bool factual = std::any_of(tokens.begin(), tokens.end(),
                                   [](const std::string& t) { return kFactWords.contains(t); });
  if (words.size() <= kShortQueryWords && factual) {
    d.engine = EngineKind::vector;
    d.rationale = "short factual question";
    return d;
  }
  const auto folded = text::fold(query);
  for (std::string_view cue : {"theme", "motif", "overall", "represent", "compare"}) {
    if (folded.find(cue) != std::string::npos) {
      d.engine = EngineKind::graph_global;
      d.rationale = fmt::format("thematic cue '{}'", cue);
      return d;
    }
  }
  d.engine = large ? EngineKind::graph_global : EngineKind::vector;
  d.rationale = large ? "large corpus" : "small corpus";
  return d;
}

std::optional<EngineKind> parse_route_reply(std::string_view reply) {
  // Fold turns "graph-local" and "GRAPH_LOCAL" into "graph local".
  const auto folded = " " + text::fold(reply) + " ";
  std::set<EngineKind> named;
  if (folded.find(" graph local ") != std::string::npos) named.insert(EngineKind::graph_local);
  if (folded.find(" graph global ") != std::string::npos) named.insert(EngineKind::graph_global);
  if (folded.find(" vector ") != std::string::npos) named.insert(EngineKind::vector);
  if (named.size() != 1) return std::nullopt;
  return *named.begin();
}

RouteDecision classify_query(llm::Gateway& gateway, std::string_view query, const CorpusStats& stats,
                             bool mcq, const RouterOptions& options) {
  std::string user = fmt::format("FORMAT: {}\n", mcq ? "multiple-choice" : "open-ended");
  if (options.include_stats) {
    user += fmt::format("CORPUS WORDS: {}\nCORPUS CHUNKS: {}\nSUBJECT: {}\n", stats.total_words,
                        stats.chunk_count, corpus::to_string(stats.subject));
  }
  user += text::block("QUESTION", query);
  const auto request = llm::PromptRequest::make(llm::ModelTier::router, llm::Phase::querying,
                                                std::string(llm::task::route), std::string(prompts::router), user);
  std::string reply;
  try {
    reply = gateway.complete(request).text;
  } catch (const Error& e) {
    spdlog::warn("router call failed ({}); using heuristic fallback", e.code());
    auto d = heuristic_route(query, stats, mcq);
    d.rationale = "router unavailable; " + d.rationale;
    return d;
  }
  if (const auto engine = parse_route_reply(reply)) {
    return {*engine, RouteSource::llm, std::string(text::truncate_utf8(text::trim(reply), 200))};
  }
  auto d = heuristic_route(query, stats, mcq);
  d.rationale = "unparsable router reply; " + d.rationale;
  return d;
}

bool EngineSet::has(EngineKind kind) const {
  return kind == EngineKind::vector ? vector != nullptr : graph != nullptr;
}

Answer EngineSet::run(EngineKind kind, std::string_view query) const {
  if (!has(kind)) throw IndexMissing(fmt::format("no {} index has been built", to_string(kind)));
  switch (kind) {
    case EngineKind::vector: return vector->answer(query, vector_options);
    case EngineKind::graph_local: return graph->local_search(query, local_options);
    case EngineKind::graph_global: return graph->global_search(query, global_options);
  }
  throw InvalidArgument("unknown engine");
}

nlohmann::json to_json(const RoutedAnswer& r) {
  return {{"decision", to_json(r.decision)}, {"answer", to_json(r.answer)}, {"usage", r.usage.to_json()}};
}

RoutedAnswer route_and_answer(llm::Gateway& gateway, std::string_view query, const EngineSet& engines,
                              const CorpusStats& stats, bool mcq, std::optional<EngineKind> override_engine,
                              const RouterOptions& options) {
  const auto before = gateway.usage_snapshot();
  RoutedAnswer out;
  if (override_engine) {
    out.decision = {*override_engine, RouteSource::manual_override, "requested by caller"};
  } else {
    out.decision = classify_query(gateway, query, stats, mcq, options);
  }
  out.answer = engines.run(out.decision.engine, query);
  out.usage = gateway.usage_snapshot().since(before);
  return out;
}

}  // namespace classrag::router
