#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "classrag/corpus/corpus.hpp"
#include "classrag/graph/graph_engine.hpp"
#include "classrag/qagen/qagen.hpp"
#include "classrag/vector/vector_engine.hpp"

namespace classrag::service {

struct DocumentInfo {
  std::string doc_id;
  std::string title;
  corpus::Subject subject = corpus::Subject::other;
  std::size_t words = 0;
  std::size_t chunks = 0;
};

struct CorpusRecord {
  std::string corpus_id;
  std::string name;
  std::size_t chunk_size_words = corpus::kDefaultChunkWords;
  std::string fingerprint;
  std::size_t total_words = 0;
  std::size_t chunk_count = 0;
  std::vector<DocumentInfo> documents;

  // Most common document subject.
  corpus::Subject subject() const;
  nlohmann::json to_json() const;
  static CorpusRecord from_json(const nlohmann::json& j);
};

enum class IndexKind { vector, graph };

std::string_view to_string(IndexKind kind);
std::optional<IndexKind> parse_index_kind(std::string_view name);

// Exclusive advisory lock on a file, held for the object's lifetime.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path);
  ~FileLock();
  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;

 private:
  int fd_ = -1;
};

// Writes through a temporary file and a rename, so readers never see a
// partial artifact.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

// Directory of versioned JSON artifacts:
//   corpora/<id>/{corpus.json, documents.jsonl, chunks.jsonl}
//   indexes/<id>/{vector.json, graph.json}
//   datasets/<id>/{qa.jsonl, manifest.json}
//   runs/<id>/report.json (+ text, csv and verdict files)
//   queries/<id>.json
//   jobs/journal.jsonl
class Workspace {
 public:
  static constexpr int kFormatVersion = 1;

  explicit Workspace(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  // The id is derived from the chunked content, so re-uploading the same
  // documents returns the existing corpus with created = false.
  std::pair<CorpusRecord, bool> create_corpus(const std::string& name, std::vector<corpus::CorpusDocument> docs,
                                              std::size_t chunk_size_words);
  std::vector<CorpusRecord> list_corpora() const;
  // Throws NotFound.
  CorpusRecord corpus(const std::string& corpus_id) const;
  std::vector<corpus::CorpusDocument> documents(const std::string& corpus_id) const;
  std::vector<corpus::Chunk> chunks(const std::string& corpus_id) const;

  bool has_index(const std::string& corpus_id, IndexKind kind) const;
  void save_vector_index(const std::string& corpus_id, const vector::VectorIndex& index);
  void save_graph_index(const std::string& corpus_id, const graph::GraphIndex& index);
  // Throw IndexMissing when absent.
  vector::VectorIndex load_vector_index(const std::string& corpus_id) const;
  graph::GraphIndex load_graph_index(const std::string& corpus_id) const;

  std::string save_dataset(const qagen::QADataset& dataset);
  qagen::QADataset load_dataset(const std::string& dataset_id) const;
  std::vector<std::string> list_datasets() const;

  // `files` maps extra file names (e.g. "report.txt") to contents.
  void save_run(const std::string& run_id, const nlohmann::json& report,
                const std::vector<std::pair<std::string, std::string>>& files = {});
  nlohmann::json load_run(const std::string& run_id) const;
  std::string load_run_file(const std::string& run_id, const std::string& name) const;
  std::vector<std::string> list_runs() const;

  void save_query(const nlohmann::json& record);
  nlohmann::json load_query(const std::string& query_id) const;
  std::vector<nlohmann::json> list_queries(const std::optional<std::string>& corpus_id) const;

  std::filesystem::path journal_path() const { return root_ / "jobs" / "journal.jsonl"; }
  std::filesystem::path idempotency_dir() const { return root_ / "idempotency"; }

 private:
  std::filesystem::path corpus_dir(const std::string& corpus_id) const;
  std::filesystem::path index_dir(const std::string& corpus_id) const;

  std::filesystem::path root_;
};

// Ids accepted in paths: letters, digits, '-', '_' and '.', not starting with '.'.
bool valid_id(std::string_view id);
// "<prefix>-<12 random hex>".
std::string new_id(std::string_view prefix);

}  // namespace classrag::service
