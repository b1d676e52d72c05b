#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "classrag/corpus/corpus.hpp"
#include "classrag/llm/gateway.hpp"

namespace classrag::qagen {

// Re-summarization stops once a single node's inputs fit this many characters.
inline constexpr std::size_t kSummaryCharThreshold = 35'000;
inline constexpr std::size_t kSummaryGroupSize = 10;

struct SummaryTree {
  // layers[0] are section summaries; the last layer holds only the root once
  // complete. Empty optionals are nodes not yet generated (a checkpoint).
  std::vector<std::vector<std::optional<std::string>>> layers;
  // children[L][i]: indices into layers[L] summarized by layers[L + 1][i].
  std::vector<std::vector<std::vector<std::size_t>>> children;

  bool complete() const;
  const std::string& root() const;  // throws InvalidArgument unless complete
  std::vector<std::size_t> layer_sizes() const;

  nlohmann::json to_json() const;
  static SummaryTree from_json(const nlohmann::json& j);
};

// Consecutive groups of at most `group_size` texts whose combined length stays
// within `char_budget`; a group always takes at least two texts when two
// remain, so every layer is strictly smaller than the one below.
std::vector<std::vector<std::size_t>> group_summaries(std::span<const std::string> texts,
                                                      std::size_t group_size = kSummaryGroupSize,
                                                      std::size_t char_budget = kSummaryCharThreshold);

struct SummarizeOptions {
  std::size_t parallelism = 4;
  std::size_t group_size = kSummaryGroupSize;
  std::size_t char_budget = kSummaryCharThreshold;
};

// One generator completion per node: each section text is summarized, then
// summaries are grouped and re-summarized until one root remains. `tree` is
// filled in place; if a provider error escapes, it holds every finished node
// and a later call with the same inputs resumes from there.
void hierarchical_summarize(llm::Gateway& gateway, std::span<const std::string> section_texts,
                            SummaryTree& tree, const SummarizeOptions& options = {});
SummaryTree hierarchical_summarize(llm::Gateway& gateway, std::span<const std::string> section_texts,
                                   const SummarizeOptions& options = {});

enum class QuestionType { specific, sectional, thematic };

std::string_view to_string(QuestionType type);
std::optional<QuestionType> parse_question_type(std::string_view name);

struct QAPair {
  std::string qa_id;
  std::string doc_id;
  std::string question;
  std::string gold_answer;
  QuestionType type = QuestionType::specific;
  // Chunk for specific, section for sectional, none for thematic.
  std::optional<corpus::UnitId> anchor;
  nlohmann::json provenance = nlohmann::json::object();
};

// First 16 hex digits of sha256 over doc, type, anchor and question.
std::string make_qa_id(const QAPair& pair);
// Throws FormatError when the anchor does not fit the type.
void validate(const QAPair& pair);

nlohmann::json to_json(const QAPair& pair);
// Accepts common field aliases (answer/gold_answer/reference_answer,
// type/question_type/category, id/qa_id, chunk_id/section_id for the anchor).
QAPair qa_from_json(const nlohmann::json& j);

struct QuestionDraft {
  std::string question;
  std::string answer;
};

// "Q: ..." / "A: ..." pairs. Blocks missing either part are skipped and
// counted.
std::vector<QuestionDraft> parse_qa_reply(std::string_view reply, std::size_t* malformed = nullptr);

struct ScopedTarget {
  QuestionType type = QuestionType::specific;  // specific or sectional
  corpus::UnitId id;
  std::string text;
};

std::vector<QAPair> gen_scoped_questions(llm::Gateway& gateway, const std::string& doc_id,
                                         const ScopedTarget& target,
                                         std::span<const std::string> neighbor_summaries,
                                         std::string_view global_summary, std::size_t quota);

std::vector<QAPair> gen_thematic(llm::Gateway& gateway, const std::string& doc_id,
                                 std::string_view global_summary, std::size_t quota);

struct FilterVerdict {
  bool keep = false;
  std::string reason;
};

// "KEEP" or "REJECT: reason"; anything else rejects with reason "unparsable".
FilterVerdict parse_filter(std::string_view reply);

struct FilterResult {
  std::vector<QAPair> kept;
  std::vector<std::pair<QAPair, std::string>> rejected;  // with reason
};

// One judge-tier call per pair against the material it was written from
// (`sources[i]` for `pairs[i]`). Provider errors reject the pair.
FilterResult filter_qa(llm::Gateway& gateway, std::span<const QAPair> pairs,
                       std::span<const std::string> sources, std::size_t parallelism = 4);

struct Quotas {
  std::size_t specific = 0;
  std::size_t sectional = 0;
  std::size_t thematic = 0;

  std::size_t& operator[](QuestionType t);
  std::size_t operator[](QuestionType t) const;
};

struct PipelineOptions {
  Quotas quotas;
  std::uint64_t seed = 7;
  std::size_t chunk_size_words = corpus::kDefaultChunkWords;
  std::size_t max_rounds = 3;
  std::size_t parallelism = 4;
  bool screen = true;
};

struct PipelineReport {
  std::string doc_id;
  std::size_t chunk_count = 0;
  std::size_t section_count = 0;
  std::size_t screened_out = 0;
  std::vector<std::size_t> summary_layers;
  Quotas achieved;
  std::array<std::size_t, 3> rounds{};
  std::array<bool, 3> shortfall{};
  std::size_t rejected = 0;

  nlohmann::json to_json() const;
};

struct DocumentRun {
  std::vector<QAPair> pairs;
  PipelineReport report;
  SummaryTree summaries;
};

// Chunk, screen sections, summarize, then generate and filter each question
// type until its quota is met or max_rounds is reached. Targets are sampled
// without replacement from a seeded shuffle.
DocumentRun run_pipeline(llm::Gateway& gateway, const corpus::CorpusDocument& doc,
                         const PipelineOptions& options);

struct QADataset {
  std::vector<QAPair> pairs;
  nlohmann::json manifest = nlohmann::json::object();

  Quotas counts() const;
  // Throws FormatError on duplicate ids or anchor/type mismatches.
  void validate() const;
};

void write_jsonl(std::ostream& out, const QADataset& dataset);
QADataset read_jsonl(std::istream& in);
QADataset load_dataset(const std::filesystem::path& path);
// Writes <dir>/qa.jsonl and <dir>/manifest.json.
void save_dataset(const std::filesystem::path& dir, const QADataset& dataset);

// Runs every document and gathers the pairs into one dataset whose manifest
// records quotas, seed, threshold, per-document reports and the usage ledger.
QADataset generate_dataset(llm::Gateway& gateway, std::span<const corpus::CorpusDocument> docs,
                           const PipelineOptions& options);

}  // namespace classrag::qagen
