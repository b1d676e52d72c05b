#include "classrag/graph/knowledge_graph.hpp"

#include <algorithm>
#include <map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/gateway.hpp"
#include "classrag/llm/tasks.hpp"
#include "prompt_assets.hpp"

namespace classrag::graph {

namespace {

std::vector<std::string> split_fields(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto bar = line.find('|', start);
    fields.emplace_back(text::trim(line.substr(start, bar - start)));
    if (bar == std::string_view::npos) break;
    start = bar + 1;
  }
  return fields;
}

}  // namespace

Extraction parse_extraction(std::string_view reply, const corpus::ChunkId& chunk) {
  Extraction out;
  for (auto raw : text::split_lines(reply)) {
    auto line = text::trim(raw);
    if (line.empty()) continue;
    // Tolerate list markers some models add.
    while (!line.empty() && (line.front() == '-' || line.front() == '*')) {
      line = text::trim(line.substr(1));
    }
    const auto fields = split_fields(line);
    if (fields.size() == 4 && text::to_upper(fields[0]) == "ENTITY" && !fields[1].empty()) {
      out.entities.push_back({fields[1], fields[2], fields[3], chunk});
    } else if (fields.size() == 4 && text::to_upper(fields[0]) == "RELATION" &&
               !fields[1].empty() && !fields[2].empty()) {
      out.relations.push_back({fields[1], fields[2], fields[3], chunk});
    } else {
      ++out.skipped_lines;
    }
  }
  return out;
}

Extraction extract_units(llm::Gateway& gateway, const corpus::Chunk& chunk) {
  if (text::trim(chunk.text).empty()) {
    throw InvalidArgument("cannot extract from empty chunk " + chunk.id.str());
  }
  const auto request = llm::PromptRequest::make(
      llm::ModelTier::generator, llm::Phase::indexing, std::string(llm::task::extract),
      std::string(prompts::extract), text::block("TEXT", chunk.text));
  const auto reply = gateway.complete(request).text;
  auto extraction = parse_extraction(reply, chunk.id);
  if (extraction.entities.empty() && extraction.relations.empty() &&
      extraction.skipped_lines > 0) {
    spdlog::warn("extraction reply for {} was unparsable ({} lines skipped)", chunk.id.str(),
                 extraction.skipped_lines);
  }
  return extraction;
}

std::string EntityNode::description() const { return text::join(descriptions, " "); }

std::string canonical_name(std::string_view name) { return text::normalize_spaces_lower(name); }

std::optional<std::size_t> KnowledgeGraph::find(std::string_view canonical) const {
  const auto it = std::lower_bound(
      nodes.begin(), nodes.end(), canonical,
      [](const EntityNode& n, std::string_view key) { return n.canonical_name < key; });
  if (it == nodes.end() || it->canonical_name != canonical) return std::nullopt;
  return static_cast<std::size_t>(it - nodes.begin());
}

std::vector<std::size_t> KnowledgeGraph::neighbors(std::size_t node) const {
  std::vector<std::size_t> out;
  const auto& name = nodes.at(node).canonical_name;
  for (const auto& e : edges) {
    if (e.source == name) out.push_back(*find(e.target));
    if (e.target == name) out.push_back(*find(e.source));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

KnowledgeGraph build_graph(std::span<const Extraction> extractions) {
  std::map<std::string, EntityNode> nodes;
  std::map<std::pair<std::string, std::string>, RelationEdge> edges;
  std::map<std::pair<std::string, std::string>, std::vector<std::string>> edge_descriptions;

  for (const auto& ex : extractions) {
    for (const auto& m : ex.entities) {
      const auto key = canonical_name(m.name);
      if (key.empty()) continue;
      auto& node = nodes[key];
      node.canonical_name = key;
      if ((node.kind.empty() || node.kind == kInferredKind) && !m.kind.empty()) {
        node.kind = text::to_lower(m.kind);
      }
      const auto desc = std::string(text::trim(m.description));
      if (!desc.empty() &&
          std::find(node.descriptions.begin(), node.descriptions.end(), desc) == node.descriptions.end()) {
        node.descriptions.push_back(desc);
      }
      node.source_chunks.insert(m.chunk);
    }
  }
  for (const auto& ex : extractions) {
    for (const auto& r : ex.relations) {
      auto a = canonical_name(r.source);
      auto b = canonical_name(r.target);
      if (a.empty() || b.empty() || a == b) continue;
      for (const auto& endpoint : {a, b}) {
        auto& node = nodes[endpoint];
        if (node.canonical_name.empty()) {
          node.canonical_name = endpoint;
          node.kind = std::string(kInferredKind);
        }
      }
      if (b < a) std::swap(a, b);
      auto& edge = edges[{a, b}];
      edge.source = a;
      edge.target = b;
      edge.weight += 1.0;
      edge.source_chunks.insert(r.chunk);
      auto& descs = edge_descriptions[{a, b}];
      const auto desc = std::string(text::trim(r.description));
      if (!desc.empty() && std::find(descs.begin(), descs.end(), desc) == descs.end()) {
        descs.push_back(desc);
      }
    }
  }

  KnowledgeGraph g;
  for (auto& [key, node] : nodes) {
    if (node.kind.empty()) node.kind = "concept";
    g.nodes.push_back(std::move(node));
  }
  for (auto& [key, edge] : edges) {
    edge.description = text::join(edge_descriptions[key], " ");
    g.edges.push_back(std::move(edge));
  }
  return g;
}

nlohmann::json KnowledgeGraph::to_json() const {
  auto ids = [](const std::set<corpus::ChunkId>& s) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& id : s) a.push_back(id.str());
    return a;
  };
  nlohmann::json jn = nlohmann::json::array();
  for (const auto& n : nodes) {
    jn.push_back({{"name", n.canonical_name},
                  {"kind", n.kind},
                  {"descriptions", n.descriptions},
                  {"source_chunks", ids(n.source_chunks)}});
  }
  nlohmann::json je = nlohmann::json::array();
  for (const auto& e : edges) {
    je.push_back({{"source", e.source},
                  {"target", e.target},
                  {"description", e.description},
                  {"weight", e.weight},
                  {"source_chunks", ids(e.source_chunks)}});
  }
  return {{"nodes", jn}, {"edges", je}};
}

KnowledgeGraph KnowledgeGraph::from_json(const nlohmann::json& j) {
  auto ids = [](const nlohmann::json& a) {
    std::set<corpus::ChunkId> s;
    for (const auto& v : a) {
      auto id = corpus::UnitId::parse(v.get<std::string>());
      if (!id) throw FormatError("bad chunk id in graph");
      s.insert(*id);
    }
    return s;
  };
  KnowledgeGraph g;
  for (const auto& n : j.at("nodes")) {
    g.nodes.push_back({n.at("name").get<std::string>(), n.at("kind").get<std::string>(),
                       n.at("descriptions").get<std::vector<std::string>>(),
                       ids(n.at("source_chunks"))});
  }
  for (const auto& e : j.at("edges")) {
    g.edges.push_back({e.at("source").get<std::string>(), e.at("target").get<std::string>(),
                       e.at("description").get<std::string>(), e.at("weight").get<double>(),
                       ids(e.at("source_chunks"))});
  }
  if (!std::is_sorted(g.nodes.begin(), g.nodes.end(), [](const auto& a, const auto& b) {
        return a.canonical_name < b.canonical_name;
      })) {
    throw FormatError("graph nodes are not sorted");
  }
  for (const auto& e : g.edges) {
    if (!g.find(e.source) || !g.find(e.target)) throw FormatError("edge endpoint missing");
  }
  return g;
}

}  // namespace classrag::graph
