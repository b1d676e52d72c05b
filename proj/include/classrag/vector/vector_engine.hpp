#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/corpus/corpus.hpp"
#include "classrag/engine/answer.hpp"
#include "classrag/llm/gateway.hpp"

namespace classrag::vector {

struct VectorEntry {
  corpus::ChunkId chunk;
  llm::EmbeddingVector embedding;
};

struct VectorIndex {
  static constexpr int kFormatVersion = 1;

  std::size_t dimension = 0;
  std::string fingerprint;  // corpus_fingerprint of the indexed chunks
  std::vector<VectorEntry> entries;

  nlohmann::json to_json() const;
  static VectorIndex from_json(const nlohmann::json& j);
};

struct RetrievalHit {
  corpus::ChunkId chunk;
  double score = 0.0;  // cosine similarity
  std::size_t rank = 0;  // 1-based
};

struct VectorBuildOptions {
  std::size_t parallelism = 4;
  std::size_t batch_size = 64;
};

// Embeds every chunk (embedding calls only; no completions).
VectorIndex build_vector_index(llm::Gateway& gateway, std::span<const corpus::Chunk> chunks,
                               const VectorBuildOptions& options = {});

// Exhaustive cosine ranking: min(k, |entries|) hits, score descending, ties by
// ascending chunk id. Scores within kScoreTieEpsilon of the first score of a
// run count as tied, so rounding noise between equal cosines of different
// vectors does not decide the order.
inline constexpr double kScoreTieEpsilon = 1e-12;
std::vector<RetrievalHit> top_k(const VectorIndex& index, const llm::EmbeddingVector& query,
                                std::size_t k);

struct VectorQueryOptions {
  std::size_t k = 8;
  PromptPolicy policy;
};

// Retrieval plus grounded generation over a built index. Immutable; safe for
// concurrent queries.
class VectorEngine {
 public:
  // Throws FingerprintMismatch when `chunks` are not the indexed ones.
  VectorEngine(llm::Gateway& gateway, std::vector<corpus::Chunk> chunks, VectorIndex index);

  std::vector<RetrievalHit> retrieve(std::string_view query, std::size_t k) const;
  // One query embedding and one generator completion. k == 0 throws InvalidK
  // before any provider call.
  Answer answer(std::string_view query, const VectorQueryOptions& options = {}) const;

  const VectorIndex& index() const { return index_; }
  const std::vector<corpus::Chunk>& chunks() const { return chunks_; }

 private:
  const corpus::Chunk& chunk(const corpus::ChunkId& id) const;

  llm::Gateway* gateway_;
  std::vector<corpus::Chunk> chunks_;
  VectorIndex index_;
};

}  // namespace classrag::vector
