#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/corpus/corpus.hpp"
#include "classrag/engine/answer.hpp"
#include "classrag/llm/gateway.hpp"

namespace classrag::shift {

// Sentences that invite the model to answer from its own knowledge. They are
// stripped from every engine prompt in knowledge-shift runs.
inline constexpr std::array<std::string_view, 2> kOutsideKnowledgeSentences = {
    "The response may also include relevant real-world knowledge outside the dataset",
    "You may also use your general knowledge to answer",
};

// Removes every deny-listed sentence and prepends the source-fidelity
// instruction once. Idempotent.
std::string standardize_query_prompt(std::string_view prompt);
PromptPolicy fidelity_policy();

// One altered-fact multiple-choice question. `correct_index` is the answer
// the material supports; `real_world_index` the distractor that is true
// outside it.
struct KsqaItem {
  std::string item_id;
  std::string subject;
  std::string question;
  std::vector<std::string> options;
  std::size_t correct_index = 0;
  std::optional<std::size_t> real_world_index;
  std::string doc_id;
  corpus::ChunkId anchor_chunk;
};

// Throws FormatError on a malformed item or a broken index invariant.
KsqaItem ksqa_item_from_json(const nlohmann::json& j);
nlohmann::json to_json(const KsqaItem& item);
std::vector<KsqaItem> read_ksqa_jsonl(std::istream& in);
std::vector<KsqaItem> load_ksqa(const std::filesystem::path& path);

// Question text plus lettered options, as sent to every system.
std::string mcq_query(const KsqaItem& item);

enum class System { vector, graph_local, graph_global, routed, no_retrieval };

inline constexpr std::array<System, 5> kAllSystems = {System::vector, System::graph_local, System::graph_global,
                                                      System::routed, System::no_retrieval};

std::string_view to_string(System system);
// Accepts the engine names, "route"/"routed" and "none"/"no_retrieval".
std::optional<System> parse_system(std::string_view name);

// Documents by id, each with its full ordered chunk list.
struct ShiftCorpus {
  std::map<std::string, std::vector<corpus::Chunk>> documents;
};

ShiftCorpus make_shift_corpus(std::span<const corpus::CorpusDocument> docs,
                              std::size_t chunk_size_words = corpus::kDefaultChunkWords);

struct ItemResult {
  std::string item_id;
  std::string subject;
  std::string answer;
  std::optional<std::size_t> chosen;
  bool correct = false;
  std::optional<EngineKind> engine_used;  // empty for no_retrieval
  std::optional<std::string> error;       // engine failure, graded incorrect
};

struct SkippedItem {
  std::string item_id;
  std::string reason;
};

struct AccuracyCell {
  std::size_t n = 0;
  std::size_t correct = 0;
  llm::UsageLedger usage;
  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
};

struct CellKey {
  std::string subject;
  corpus::Scope scope = corpus::Scope::chunk;
  System system = System::vector;

  auto operator<=>(const CellKey&) const = default;
};

struct AccuracyReport {
  std::map<CellKey, AccuracyCell> cells;
  std::vector<ItemResult> items;
  std::vector<SkippedItem> skipped;
  std::size_t indexing_passes = 0;

  // subject,scope,system,n,correct,accuracy
  std::string to_csv() const;
  // Rows: subject x system; columns: scopes.
  std::string to_text() const;
  nlohmann::json to_json() const;

  void merge(const AccuracyReport& other);
};

struct KsqaOptions {
  std::size_t parallelism = 4;
  std::size_t window_radius = corpus::kWindowRadius;
  std::size_t vector_k = 8;
  bool standardize_prompts = true;
};

// Reuses built indexes across items and calls, keyed by the fingerprint of
// the scoped chunk set and the index kind.
class IndexCache {
 public:
  IndexCache();
  ~IndexCache();
  IndexCache(const IndexCache&) = delete;
  IndexCache& operator=(const IndexCache&) = delete;

  std::size_t builds() const;

  struct Impl;
  Impl& impl() { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

// Every item at one scope through one system. Subjects run one after another
// so each cell's usage delta is its own; items within a subject run
// bounded-parallel. Items whose document or anchor is missing are skipped and
// listed.
AccuracyReport run_ksqa(llm::Gateway& gateway, std::span<const KsqaItem> items, corpus::Scope scope, System system,
                        const ShiftCorpus& corpus, IndexCache& cache, const KsqaOptions& options = {});

AccuracyReport run_ksqa(llm::Gateway& gateway, std::span<const KsqaItem> items, corpus::Scope scope, System system,
                        const ShiftCorpus& corpus, const KsqaOptions& options = {});

}  // namespace classrag::shift
