#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/llm/types.hpp"

namespace classrag::llm {
class Gateway;
}  // namespace classrag::llm

namespace classrag::corpus {

enum class Subject { history, literature, science, computer_science, other };

std::string_view to_string(Subject subject);
// Unknown names map to Subject::other.
Subject parse_subject(std::string_view name);

struct CorpusDocument {
  std::string doc_id;
  std::string title;
  Subject subject = Subject::other;
  std::vector<std::string> words;
  std::string text;  // normalized source text, kept for display
};

// Line endings become '\n' and runs of blank lines collapse to one.
std::string normalize_text(std::string_view raw);

// Throws EmptyDocument when the text has no words.
CorpusDocument ingest(std::string doc_id, std::string title, Subject subject,
                      std::string_view raw_text);

// (doc_id, ordinal) address shared by chunks and sections. Printed as "doc#n".
struct UnitId {
  std::string doc_id;
  std::size_t ordinal = 0;

  auto operator<=>(const UnitId&) const = default;
  bool operator==(const UnitId&) const = default;

  std::string str() const;
  static std::optional<UnitId> parse(std::string_view s);
};
using ChunkId = UnitId;
using SectionId = UnitId;

struct Chunk {
  ChunkId id;
  std::size_t word_begin = 0;  // [word_begin, word_end) into the document's words
  std::size_t word_end = 0;
  std::string text;

  std::size_t word_count() const { return word_end - word_begin; }
};

inline constexpr std::size_t kDefaultChunkWords = 500;
inline constexpr std::size_t kChunksPerSection = 10;

// Consecutive, non-overlapping word windows; the last may be short.
std::vector<Chunk> chunk_document(const CorpusDocument& doc,
                                  std::size_t chunk_size_words = kDefaultChunkWords);

struct Section {
  SectionId id;
  std::vector<std::size_t> chunk_ordinals;
  bool screened_out = false;
};

std::vector<Section> group_sections(std::span<const Chunk> chunks,
                                    std::size_t group_size = kChunksPerSection);
// Texts of the section's chunks joined by blank lines. `chunks` must be the
// document's full chunk list, indexed by ordinal.
std::string section_text(const Section& section, std::span<const Chunk> chunks);

struct ScreeningVerdict {
  bool keep = true;
  std::string reason;
};

// "KEEP" / "DISCARD: reason"; anything else keeps the unit (fail-open).
ScreeningVerdict parse_screening(std::string_view reply);
// One judge-tier call. A provider refusal keeps the unit and logs a warning;
// transport failures propagate.
ScreeningVerdict screen_content(llm::Gateway& gateway, std::string_view unit_text,
                                llm::Phase phase);

enum class Scope { chunk, window, document };  // "short", "medium", "full"

std::string_view to_string(Scope scope);
std::optional<Scope> parse_scope(std::string_view name);

struct SubCorpus {
  Scope scope = Scope::document;
  ChunkId anchor;
  std::vector<ChunkId> chunk_ids;  // ordinal order
};

inline constexpr std::size_t kWindowRadius = 15;

// chunk: the anchor alone. window: the anchor and its 2*radius nearest chunks,
// shifted inward at document edges so the size stays min(2*radius+1, n).
// document: every chunk. Only chunks of the anchor's document are considered.
SubCorpus retrieval_scope(std::span<const Chunk> doc_chunks, const ChunkId& anchor, Scope scope,
                          std::size_t window_radius = kWindowRadius);
std::vector<Chunk> materialize(const SubCorpus& sub, std::span<const Chunk> doc_chunks);

// sha256 over chunk ids and texts.
std::string corpus_fingerprint(std::span<const Chunk> chunks);

// Manifest: JSON array (or {"documents": [...]}) of {doc_id, path, title,
// subject}. Paths are relative to the manifest. An inline "text" field may be
// given instead of "path".
struct ManifestEntry {
  std::string doc_id;
  std::string path;
  std::string title;
  Subject subject = Subject::other;
  std::optional<std::string> text;
};

std::vector<ManifestEntry> parse_manifest(const nlohmann::json& j);
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& manifest_path);
std::vector<CorpusDocument> load_documents(const std::vector<ManifestEntry>& entries,
                                           const std::filesystem::path& base_dir);

nlohmann::json to_json(const Chunk& chunk);
Chunk chunk_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Section& section);
Section section_from_json(const nlohmann::json& j);

void write_chunks_jsonl(std::ostream& out, std::span<const Chunk> chunks);
std::vector<Chunk> read_chunks_jsonl(std::istream& in);
void write_sections_jsonl(std::ostream& out, std::span<const Section> sections);
std::vector<Section> read_sections_jsonl(std::istream& in);

}  // namespace classrag::corpus
