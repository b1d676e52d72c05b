#include "classrag/vector/vector_engine.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "classrag/common/error.hpp"
#include "classrag/common/parallel.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/tasks.hpp"
#include "prompt_assets.hpp"

namespace classrag::vector {

nlohmann::json VectorIndex::to_json() const {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : entries) {
    items.push_back({{"chunk_id", e.chunk.str()}, {"embedding", e.embedding.values}});
  }
  return {{"format", "classrag.vector_index"},
          {"version", kFormatVersion},
          {"dimension", dimension},
          {"fingerprint", fingerprint},
          {"entries", items}};
}

VectorIndex VectorIndex::from_json(const nlohmann::json& j) {
  if (j.value("version", 0) != kFormatVersion) {
    throw FormatError("unsupported vector index version");
  }
  VectorIndex index;
  index.dimension = j.at("dimension").get<std::size_t>();
  index.fingerprint = j.at("fingerprint").get<std::string>();
  for (const auto& item : j.at("entries")) {
    auto id = corpus::UnitId::parse(item.at("chunk_id").get<std::string>());
    if (!id) throw FormatError("bad chunk id in vector index");
    VectorEntry e{*id, {item.at("embedding").get<std::vector<double>>()}};
    if (e.embedding.dimension() != index.dimension) {
      throw DimensionMismatch("vector index entry has the wrong dimension");
    }
    index.entries.push_back(std::move(e));
  }
  return index;
}

VectorIndex build_vector_index(llm::Gateway& gateway, std::span<const corpus::Chunk> chunks,
                               const VectorBuildOptions& options) {
  if (chunks.empty()) throw InvalidArgument("cannot index an empty chunk list");
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  const std::size_t batches = (chunks.size() + batch - 1) / batch;
  std::vector<std::vector<llm::EmbeddingVector>> results(batches);
  parallel_for(batches, options.parallelism, [&](std::size_t b) {
    std::vector<std::string> texts;
    for (std::size_t i = b * batch; i < std::min(chunks.size(), (b + 1) * batch); ++i) {
      texts.push_back(chunks[i].text);
    }
    results[b] = gateway.embed(texts, llm::Phase::indexing);
  });

  VectorIndex index;
  index.fingerprint = corpus::corpus_fingerprint(chunks);
  std::size_t i = 0;
  for (auto& batch_vectors : results) {
    for (auto& v : batch_vectors) {
      if (index.dimension == 0) index.dimension = v.dimension();
      if (v.dimension() != index.dimension) {
        throw DimensionMismatch("ragged embeddings while building vector index");
      }
      index.entries.push_back({chunks[i++].id, std::move(v)});
    }
  }
  return index;
}

std::vector<RetrievalHit> top_k(const VectorIndex& index, const llm::EmbeddingVector& query,
                                std::size_t k) {
  if (query.dimension() != index.dimension) {
    throw DimensionMismatch(fmt::format("query dimension {} vs index dimension {}",
                                        query.dimension(), index.dimension));
  }
  std::vector<RetrievalHit> hits;
  hits.reserve(index.entries.size());
  for (const auto& e : index.entries) hits.push_back({e.chunk, llm::cosine(query, e.embedding), 0});

  std::stable_sort(hits.begin(), hits.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
    return a.score > b.score;
  });
  // Reorder each run of tied scores by chunk id.
  for (std::size_t begin = 0; begin < hits.size();) {
    std::size_t end = begin + 1;
    while (end < hits.size() && hits[begin].score - hits[end].score <= kScoreTieEpsilon) ++end;
    std::sort(hits.begin() + static_cast<std::ptrdiff_t>(begin), hits.begin() + static_cast<std::ptrdiff_t>(end),
              [](const RetrievalHit& a, const RetrievalHit& b) { return a.chunk < b.chunk; });
    if (end >= k) break;
    begin = end;
  }
  const std::size_t n = std::min(k, hits.size());
  hits.resize(n);
  for (std::size_t r = 0; r < n; ++r) hits[r].rank = r + 1;
  return hits;
}

VectorEngine::VectorEngine(llm::Gateway& gateway, std::vector<corpus::Chunk> chunks,
                           VectorIndex index)
    : gateway_(&gateway), chunks_(std::move(chunks)), index_(std::move(index)) {
  if (corpus::corpus_fingerprint(chunks_) != index_.fingerprint) {
    throw FingerprintMismatch("vector index was built over different chunks");
  }
}

const corpus::Chunk& VectorEngine::chunk(const corpus::ChunkId& id) const {
  const auto it = std::find_if(chunks_.begin(), chunks_.end(),
                               [&](const corpus::Chunk& c) { return c.id == id; });
  if (it == chunks_.end()) throw NotFound("chunk " + id.str() + " missing from engine");
  return *it;
}

std::vector<RetrievalHit> VectorEngine::retrieve(std::string_view query, std::size_t k) const {
  if (index_.entries.empty()) throw IndexMissing("vector index is empty");
  const auto q = gateway_->embed_one(std::string(query), llm::Phase::querying);
  return top_k(index_, q, k);
}

Answer VectorEngine::answer(std::string_view query, const VectorQueryOptions& options) const {
  if (options.k == 0) throw InvalidK("k must be positive");
  const auto start = std::chrono::steady_clock::now();
  const auto hits = retrieve(query, options.k);

  std::string user;
  Answer out;
  out.engine = EngineKind::vector;
  for (const auto& h : hits) {
    user += text::block("PASSAGE [" + h.chunk.str() + "]", chunk(h.chunk).text);
    out.context_chunk_ids.push_back(h.chunk);
  }
  user += text::block("QUESTION", query);

  const auto request = llm::PromptRequest::make(
      llm::ModelTier::generator, llm::Phase::querying, std::string(llm::task::vector_answer),
      apply_policy(options.policy, prompts::vector_answer), std::move(user));
  out.text = gateway_->complete(request).text;
  out.cited_chunk_ids = parse_citations(out.text, out.context_chunk_ids);
  out.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace classrag::vector
