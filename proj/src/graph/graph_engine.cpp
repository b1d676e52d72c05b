#include "classrag/graph/graph_engine.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/parallel.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/tasks.hpp"
#include "prompt_assets.hpp"

namespace classrag::graph {

namespace {

// Appends lines until the next one would exceed `budget` characters. The
// caller orders lines by descending relevance.
std::string pack_lines(const std::vector<std::string>& lines, std::size_t budget) {
  std::string out;
  for (const auto& line : lines) {
    if (out.size() + line.size() + 1 > budget) {
      if (out.empty()) out = text::truncate_utf8(line, budget);
      break;
    }
    out += line;
    out += '\n';
  }
  return out;
}

std::string entity_line(const EntityNode& node) {
  const auto desc = node.description();
  return desc.empty() ? node.canonical_name : node.canonical_name + ": " + desc;
}

std::string edge_line(const RelationEdge& e) {
  return e.description.empty() ? e.source + " -- " + e.target
                               : e.source + " -- " + e.target + ": " + e.description;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string entity_text(const EntityNode& node) { return entity_line(node); }

std::vector<CommunitySummary> summarize_communities(llm::Gateway& gateway, const KnowledgeGraph& graph,
                                                    const CommunityHierarchy& hierarchy,
                                                    const SummaryOptions& options) {
  std::vector<CommunitySummary> out;
  std::vector<std::vector<std::size_t>> member_nodes;
  for (std::size_t level = 0; level < hierarchy.levels.size(); ++level) {
    for (const auto id : hierarchy.communities(level)) {
      CommunitySummary s;
      s.level = level;
      s.community_id = id;
      auto nodes = hierarchy.members(level, id);
      for (const auto n : nodes) s.members.push_back(graph.nodes.at(n).canonical_name);
      out.push_back(std::move(s));
      member_nodes.push_back(std::move(nodes));
    }
  }

  parallel_for(out.size(), options.parallelism, [&](std::size_t i) {
    auto& s = out[i];
    const auto& nodes = member_nodes[i];
    if (nodes.size() < std::max<std::size_t>(1, options.min_size)) {
      s.text = graph.nodes.at(nodes.front()).description();
      if (s.text.empty()) s.text = s.members.front();
      return;
    }
    // Most-attested entities first so truncation drops the marginal ones.
    auto ranked = nodes;
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
      return graph.nodes[a].source_chunks.size() > graph.nodes[b].source_chunks.size();
    });
    std::vector<std::string> entity_lines;
    for (const auto n : ranked) entity_lines.push_back(entity_line(graph.nodes[n]));

    const std::set<std::string> names(s.members.begin(), s.members.end());
    std::vector<const RelationEdge*> inner;
    for (const auto& e : graph.edges) {
      if (names.contains(e.source) && names.contains(e.target)) inner.push_back(&e);
    }
    std::stable_sort(inner.begin(), inner.end(),
                     [](const RelationEdge* a, const RelationEdge* b) { return a->weight > b->weight; });
    std::vector<std::string> edge_lines;
    for (const auto* e : inner) edge_lines.push_back(edge_line(*e));

    const auto user = text::block("ENTITIES", pack_lines(entity_lines, kContextBudget)) +
                      text::block("RELATIONSHIPS", pack_lines(edge_lines, kContextBudget));
    const auto request = llm::PromptRequest::make(
        llm::ModelTier::generator, llm::Phase::indexing, std::string(llm::task::community_summary),
        std::string(prompts::community_summary), user);
    try {
      s.text = gateway.complete(request).text;
      s.generated = true;
    } catch (const TransportError& e) {
      spdlog::warn("summary for community {} at level {} missing: {}", s.community_id, s.level, e.what());
      s.missing = true;
    } catch (const ProviderRefusal& e) {
      spdlog::warn("summary for community {} at level {} refused: {}", s.community_id, s.level, e.what());
      s.missing = true;
    }
  });
  return out;
}

std::string summary_or_fallback(const CommunitySummary& summary, const KnowledgeGraph& graph) {
  if (!summary.missing) return summary.text;
  std::vector<std::string> lines;
  for (const auto& name : summary.members) {
    if (const auto n = graph.find(name)) lines.push_back(entity_line(graph.nodes[*n]));
  }
  return pack_lines(lines, kContextBudget);
}

const CommunitySummary* GraphIndex::summary(std::size_t level, std::size_t community) const {
  const auto it = std::lower_bound(summaries.begin(), summaries.end(), std::pair{level, community},
                                   [](const CommunitySummary& s, const std::pair<std::size_t, std::size_t>& key) {
                                     return std::pair{s.level, s.community_id} < key;
                                   });
  if (it == summaries.end() || it->level != level || it->community_id != community) return nullptr;
  return &*it;
}

nlohmann::json GraphIndex::to_json() const {
  nlohmann::json js = nlohmann::json::array();
  for (const auto& s : summaries) {
    js.push_back({{"level", s.level},
                  {"community_id", s.community_id},
                  {"text", s.text},
                  {"members", s.members},
                  {"generated", s.generated},
                  {"missing", s.missing}});
  }
  nlohmann::json je = nlohmann::json::array();
  for (const auto& e : entity_embeddings) je.push_back(e.values);
  return {{"format", "classrag.graph_index"},
          {"version", kFormatVersion},
          {"fingerprint", fingerprint},
          {"graph", graph.to_json()},
          {"hierarchy", hierarchy.to_json()},
          {"summaries", js},
          {"embeddings", je}};
}

GraphIndex GraphIndex::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kFormatVersion) throw FormatError("unsupported graph index version");
  GraphIndex index;
  index.fingerprint = j.at("fingerprint").get<std::string>();
  index.graph = KnowledgeGraph::from_json(j.at("graph"));
  index.hierarchy = CommunityHierarchy::from_json(j.at("hierarchy"));
  for (const auto& s : j.at("summaries")) {
    index.summaries.push_back({s.at("level").get<std::size_t>(), s.at("community_id").get<std::size_t>(),
                               s.at("text").get<std::string>(),
                               s.at("members").get<std::vector<std::string>>(),
                               s.value("generated", false), s.value("missing", false)});
  }
  for (const auto& e : j.at("embeddings")) index.entity_embeddings.push_back({e.get<std::vector<double>>()});

  const auto n = index.graph.nodes.size();
  if (index.entity_embeddings.size() != n) throw FormatError("entity embeddings do not match nodes");
  for (const auto& level : index.hierarchy.levels) {
    if (level.size() != n) throw FormatError("hierarchy level does not cover every node");
  }
  return index;
}

GraphIndex build_graph_index(llm::Gateway& gateway, std::span<const corpus::Chunk> chunks,
                             const GraphBuildOptions& options) {
  if (chunks.empty()) throw InvalidArgument("cannot index an empty chunk list");
  std::vector<Extraction> extractions(chunks.size());
  parallel_for(chunks.size(), options.parallelism,
               [&](std::size_t i) { extractions[i] = extract_units(gateway, chunks[i]); });

  GraphIndex index;
  index.fingerprint = corpus::corpus_fingerprint(chunks);
  index.graph = build_graph(extractions);
  if (index.graph.nodes.empty()) {
    spdlog::warn("extraction produced no entities; graph index is empty");
    return index;
  }
  index.hierarchy = detect_communities(WeightedGraph::from(index.graph), options.communities);
  auto summary_options = options.summaries;
  summary_options.parallelism = options.parallelism;
  index.summaries = summarize_communities(gateway, index.graph, index.hierarchy, summary_options);

  std::vector<std::string> texts;
  for (const auto& node : index.graph.nodes) texts.push_back(entity_text(node));
  index.entity_embeddings = gateway.embed(texts, llm::Phase::indexing);
  return index;
}

std::optional<int> parse_score(std::string_view reply) {
  const auto lines = text::split_lines(reply);
  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const auto line = text::trim(*it);
    if (line.empty()) continue;
    if (!text::starts_with_ci(line, "SCORE:")) return std::nullopt;
    const auto value = text::trim(line.substr(6));
    if (value.empty() || value.size() > 3 ||
        !std::all_of(value.begin(), value.end(), [](unsigned char c) { return std::isdigit(c); })) {
      return std::nullopt;
    }
    const int score = std::stoi(std::string(value));
    if (score > 100) return std::nullopt;
    return score;
  }
  return std::nullopt;
}

std::string strip_score(std::string_view reply) {
  std::vector<std::string> kept;
  for (auto line : text::split_lines(reply)) {
    if (!text::starts_with_ci(text::trim(line), "SCORE:")) kept.emplace_back(line);
  }
  return std::string(text::trim(text::join(kept, "\n")));
}

GraphEngine::GraphEngine(llm::Gateway& gateway, std::vector<corpus::Chunk> chunks, GraphIndex index)
    : gateway_(&gateway), chunks_(std::move(chunks)), index_(std::move(index)) {
  if (corpus::corpus_fingerprint(chunks_) != index_.fingerprint) {
    throw FingerprintMismatch("graph index was built over different chunks");
  }
}

const corpus::Chunk* GraphEngine::chunk(const corpus::ChunkId& id) const {
  const auto it = std::find_if(chunks_.begin(), chunks_.end(),
                               [&](const corpus::Chunk& c) { return c.id == id; });
  return it == chunks_.end() ? nullptr : &*it;
}

LocalContext GraphEngine::local_context(std::string_view query, const LocalSearchOptions& options) const {
  const auto& g = index_.graph;
  if (g.nodes.empty()) throw NoGraph("graph index has no entities");
  if (options.top_entities == 0) throw InvalidK("top_entities must be positive");

  const auto q = gateway_->embed_one(std::string(query), llm::Phase::querying);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    scored.emplace_back(llm::cosine(q, index_.entity_embeddings[i]), i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  scored.resize(std::min(options.top_entities, scored.size()));

  // Seed entities first, then their 1-hop neighbors.
  std::vector<std::size_t> selected;
  std::set<std::size_t> seen;
  for (const auto& [_, n] : scored) {
    if (seen.insert(n).second) selected.push_back(n);
  }
  for (const auto& [_, n] : scored) {
    for (const auto nb : g.neighbors(n)) {
      if (seen.insert(nb).second) selected.push_back(nb);
    }
  }

  LocalContext ctx;
  std::vector<std::string> entity_lines;
  std::set<std::string> names;
  for (const auto n : selected) {
    ctx.entities.push_back(g.nodes[n].canonical_name);
    names.insert(g.nodes[n].canonical_name);
    entity_lines.push_back(entity_line(g.nodes[n]));
  }

  std::vector<const RelationEdge*> edges;
  for (const auto& e : g.edges) {
    if (names.contains(e.source) && names.contains(e.target)) edges.push_back(&e);
  }
  std::stable_sort(edges.begin(), edges.end(),
                   [](const RelationEdge* a, const RelationEdge* b) { return a->weight > b->weight; });
  std::vector<std::string> edge_lines;
  for (const auto* e : edges) edge_lines.push_back(edge_line(*e));

  std::vector<std::string> reports;
  if (!index_.hierarchy.levels.empty()) {
    for (const auto& [_, n] : scored) {
      const auto c = index_.hierarchy.levels[0][n];
      if (std::find(ctx.communities.begin(), ctx.communities.end(), c) != ctx.communities.end()) continue;
      ctx.communities.push_back(c);
      if (const auto* s = index_.summary(0, c)) reports.push_back(summary_or_fallback(*s, g));
    }
  }

  // Source chunks ranked by how many selected entities they mention; seed
  // entities count double.
  std::map<corpus::ChunkId, int> votes;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    for (const auto& id : g.nodes[selected[i]].source_chunks) votes[id] += i < scored.size() ? 2 : 1;
  }
  std::vector<std::pair<int, corpus::ChunkId>> ranked_chunks;
  for (const auto& [id, v] : votes) ranked_chunks.emplace_back(v, id);
  std::stable_sort(ranked_chunks.begin(), ranked_chunks.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });

  std::string sources;
  for (const auto& [_, id] : ranked_chunks) {
    if (ctx.chunks.size() >= options.max_source_chunks) break;
    const auto* c = chunk(id);
    if (c == nullptr) continue;
    auto b = text::block("SOURCE [" + id.str() + "]", c->text);
    if (!sources.empty() && sources.size() + b.size() > kContextBudget) break;
    sources += b;
    ctx.chunks.push_back(id);
  }

  ctx.prompt = text::block("ENTITIES", pack_lines(entity_lines, kContextBudget)) +
               text::block("RELATIONSHIPS", pack_lines(edge_lines, kContextBudget)) +
               text::block("COMMUNITY REPORT", pack_lines(reports, kContextBudget)) + sources +
               text::block("QUESTION", query);
  return ctx;
}

Answer GraphEngine::local_search(std::string_view query, const LocalSearchOptions& options) const {
  const auto start = std::chrono::steady_clock::now();
  auto ctx = local_context(query, options);
  const auto request = llm::PromptRequest::make(
      llm::ModelTier::generator, llm::Phase::querying, std::string(llm::task::local_answer),
      apply_policy(options.policy, prompts::local_answer), std::move(ctx.prompt));
  Answer out;
  out.engine = EngineKind::graph_local;
  out.text = gateway_->complete(request).text;
  out.context_chunk_ids = ctx.chunks;
  out.cited_chunk_ids = parse_citations(out.text, out.context_chunk_ids);
  out.latency_ms = elapsed_ms(start);
  return out;
}

Answer GraphEngine::global_search(std::string_view query, const GlobalSearchOptions& options) const {
  if (index_.graph.nodes.empty() || index_.hierarchy.levels.empty()) {
    throw NoGraph("graph index has no communities");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto level = options.level.value_or(index_.hierarchy.top_level());
  if (level > index_.hierarchy.top_level()) {
    throw InvalidArgument(fmt::format("level {} exceeds top level {}", level, index_.hierarchy.top_level()));
  }
  std::vector<const CommunitySummary*> shards;
  for (const auto& s : index_.summaries) {
    if (s.level == level) shards.push_back(&s);
  }

  const auto map_prompt = apply_policy(options.policy, prompts::global_map);
  std::vector<std::optional<GlobalPartial>> results(shards.size());
  parallel_for(shards.size(), options.parallelism, [&](std::size_t i) {
    const auto* s = shards[i];
    const auto user = text::block("COMMUNITY REPORT", text::truncate_utf8(summary_or_fallback(*s, index_.graph), kContextBudget)) +
                      text::block("QUESTION", query);
    const auto request = llm::PromptRequest::make(llm::ModelTier::generator, llm::Phase::querying,
                                                  std::string(llm::task::global_map), map_prompt, user);
    std::string reply;
    try {
      reply = gateway_->complete(request).text;
    } catch (const Error& e) {
      if (dynamic_cast<const TransportError*>(&e) == nullptr &&
          dynamic_cast<const ProviderRefusal*>(&e) == nullptr) {
        throw;
      }
      spdlog::warn("map shard for community {} dropped: {}", s->community_id, e.what());
      return;
    }
    const auto score = parse_score(reply);
    if (!score || *score == 0) return;
    results[i] = GlobalPartial{s->community_id, *score, strip_score(reply)};
  });

  std::vector<GlobalPartial> partials;
  for (auto& r : results) {
    if (r) partials.push_back(std::move(*r));
  }
  if (partials.empty()) throw NoEvidence("no community produced a helpful partial answer");
  std::stable_sort(partials.begin(), partials.end(),
                   [](const GlobalPartial& a, const GlobalPartial& b) { return a.score > b.score; });

  std::string packed;
  for (std::size_t i = 0; i < partials.size(); ++i) {
    auto b = text::block(fmt::format("PARTIAL {} (score {})", i + 1, partials[i].score), partials[i].text);
    if (!packed.empty() && packed.size() + b.size() > kContextBudget) break;
    packed += b;
  }
  const auto request = llm::PromptRequest::make(
      llm::ModelTier::generator, llm::Phase::querying, std::string(llm::task::global_reduce),
      apply_policy(options.policy, prompts::global_reduce), packed + text::block("QUESTION", query));
  Answer out;
  out.engine = EngineKind::graph_global;
  out.text = gateway_->complete(request).text;
  out.latency_ms = elapsed_ms(start);
  return out;
}

}  // namespace classrag::graph
