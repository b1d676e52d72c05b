#include "classrag/corpus/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/hash.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/gateway.hpp"
#include "classrag/llm/tasks.hpp"
#include "prompt_assets.hpp"

namespace classrag::corpus {

std::string_view to_string(Subject subject) {
  switch (subject) {
    case Subject::history: return "history";
    case Subject::literature: return "literature";
    case Subject::science: return "science";
    case Subject::computer_science: return "computer_science";
    case Subject::other: return "other";
  }
  return "other";
}

Subject parse_subject(std::string_view name) {
  const auto n = text::to_lower(text::trim(name));
  if (n == "history") return Subject::history;
  if (n == "literature") return Subject::literature;
  if (n == "science") return Subject::science;
  if (n == "computer_science" || n == "computer science" || n == "cs") {
    return Subject::computer_science;
  }
  return Subject::other;
}

std::string normalize_text(std::string_view raw) {
  std::string lf;
  lf.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\r') {
      lf.push_back('\n');
      if (i + 1 < raw.size() && raw[i + 1] == '\n') ++i;
    } else {
      lf.push_back(raw[i]);
    }
  }
  std::string out;
  out.reserve(lf.size());
  bool previous_blank = false;
  const auto lines = text::split_lines(lf);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool blank = text::trim(lines[i]).empty();
    if (blank && previous_blank) continue;
    out.append(blank ? std::string_view{} : lines[i]);
    if (i + 1 < lines.size() || (!lf.empty() && lf.back() == '\n')) out.push_back('\n');
    previous_blank = blank;
  }
  return out;
}

CorpusDocument ingest(std::string doc_id, std::string title, Subject subject,
                      std::string_view raw_text) {
  CorpusDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.title = std::move(title);
  doc.subject = subject;
  doc.text = normalize_text(raw_text);
  doc.words = text::split_whitespace(doc.text);
  if (doc.words.empty()) throw EmptyDocument("document '" + doc.doc_id + "' has no words");
  return doc;
}

std::string UnitId::str() const { return fmt::format("{}#{}", doc_id, ordinal); }

std::optional<UnitId> UnitId::parse(std::string_view s) {
  const auto hash = s.rfind('#');
  if (hash == std::string_view::npos || hash == 0 || hash + 1 == s.size()) return std::nullopt;
  std::size_t ordinal = 0;
  const auto digits = s.substr(hash + 1);
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), ordinal);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return UnitId{std::string(s.substr(0, hash)), ordinal};
}

std::vector<Chunk> chunk_document(const CorpusDocument& doc, std::size_t chunk_size_words) {
  if (chunk_size_words == 0) throw InvalidArgument("chunk size must be positive");
  if (doc.words.empty()) throw EmptyDocument("document '" + doc.doc_id + "' has no words");
  std::vector<Chunk> chunks;
  chunks.reserve((doc.words.size() + chunk_size_words - 1) / chunk_size_words);
  for (std::size_t begin = 0; begin < doc.words.size(); begin += chunk_size_words) {
    Chunk c;
    c.id = {doc.doc_id, chunks.size()};
    c.word_begin = begin;
    c.word_end = std::min(doc.words.size(), begin + chunk_size_words);
    std::vector<std::string> span(doc.words.begin() + static_cast<std::ptrdiff_t>(c.word_begin),
                                  doc.words.begin() + static_cast<std::ptrdiff_t>(c.word_end));
    c.text = text::join(span, " ");
    chunks.push_back(std::move(c));
  }
  return chunks;
}

std::vector<Section> group_sections(std::span<const Chunk> chunks, std::size_t group_size) {
  if (group_size == 0) throw InvalidArgument("section size must be positive");
  std::vector<Section> sections;
  for (std::size_t i = 0; i < chunks.size(); ++i) {
    if (i % group_size == 0) {
      Section s;
      s.id = {chunks[i].id.doc_id, sections.size()};
      sections.push_back(std::move(s));
    }
    sections.back().chunk_ordinals.push_back(chunks[i].id.ordinal);
  }
  return sections;
}

std::string section_text(const Section& section, std::span<const Chunk> chunks) {
  std::vector<std::string> parts;
  for (auto ordinal : section.chunk_ordinals) {
    if (ordinal >= chunks.size()) throw UnknownAnchor("section refers to missing chunk");
    parts.push_back(chunks[ordinal].text);
  }
  return text::join(parts, "\n\n");
}

ScreeningVerdict parse_screening(std::string_view reply) {
  const auto line = text::trim(reply);
  if (text::starts_with_ci(line, "KEEP")) return {true, "kept"};
  if (text::starts_with_ci(line, "DISCARD")) {
    auto reason = line.substr(7);
    if (!reason.empty() && reason.front() == ':') reason.remove_prefix(1);
    reason = text::trim(reason);
    return {false, reason.empty() ? std::string("discarded") : std::string(reason)};
  }
  return {true, "unparsable; fail-open"};
}

ScreeningVerdict screen_content(llm::Gateway& gateway, std::string_view unit_text,
                                llm::Phase phase) {
  auto request = llm::PromptRequest::make(
      llm::ModelTier::judge, phase, std::string(llm::task::screen), std::string(prompts::screen),
      text::block("PASSAGE", text::truncate_utf8(unit_text, 12000)));
  request.max_output_tokens = 64;
  try {
    return parse_screening(gateway.complete(request).text);
  } catch (const ProviderRefusal& e) {
    spdlog::warn("screening refused by provider, keeping unit: {}", e.what());
    return {true, "provider refusal; fail-open"};
  }
}

std::string_view to_string(Scope scope) {
  switch (scope) {
    case Scope::chunk: return "short";
    case Scope::window: return "medium";
    case Scope::document: return "full";
  }
  return "full";
}

std::optional<Scope> parse_scope(std::string_view name) {
  if (name == "short") return Scope::chunk;
  if (name == "medium") return Scope::window;
  if (name == "full") return Scope::document;
  return std::nullopt;
}

SubCorpus retrieval_scope(std::span<const Chunk> doc_chunks, const ChunkId& anchor, Scope scope,
                          std::size_t window_radius) {
  std::vector<const Chunk*> own;
  for (const auto& c : doc_chunks) {
    if (c.id.doc_id == anchor.doc_id) own.push_back(&c);
  }
  std::sort(own.begin(), own.end(),
            [](const Chunk* a, const Chunk* b) { return a->id.ordinal < b->id.ordinal; });
  const auto it = std::find_if(own.begin(), own.end(),
                               [&](const Chunk* c) { return c->id == anchor; });
  if (it == own.end()) throw UnknownAnchor("anchor " + anchor.str() + " is not in the corpus");
  const auto pos = static_cast<std::ptrdiff_t>(it - own.begin());
  const auto n = static_cast<std::ptrdiff_t>(own.size());

  std::ptrdiff_t lo = 0;
  std::ptrdiff_t hi = n - 1;
  if (scope == Scope::chunk) {
    lo = hi = pos;
  } else if (scope == Scope::window) {
    const auto r = static_cast<std::ptrdiff_t>(window_radius);
    lo = pos - r;
    hi = pos + r;
    if (lo < 0) {
      hi -= lo;
      lo = 0;
    }
    if (hi > n - 1) {
      lo -= hi - (n - 1);
      hi = n - 1;
    }
    lo = std::max<std::ptrdiff_t>(lo, 0);
  }

  SubCorpus sub;
  sub.scope = scope;
  sub.anchor = anchor;
  for (auto i = lo; i <= hi; ++i) sub.chunk_ids.push_back(own[static_cast<std::size_t>(i)]->id);
  return sub;
}

std::vector<Chunk> materialize(const SubCorpus& sub, std::span<const Chunk> doc_chunks) {
  std::vector<Chunk> out;
  out.reserve(sub.chunk_ids.size());
  for (const auto& id : sub.chunk_ids) {
    const auto it = std::find_if(doc_chunks.begin(), doc_chunks.end(),
                                 [&](const Chunk& c) { return c.id == id; });
    if (it == doc_chunks.end()) throw UnknownAnchor("chunk " + id.str() + " is not in the corpus");
    out.push_back(*it);
  }
  return out;
}

std::string corpus_fingerprint(std::span<const Chunk> chunks) {
  std::string material;
  for (const auto& c : chunks) {
    material += c.id.str();
    material.push_back('\x1f');
    material += c.text;
    material.push_back('\x1e');
  }
  return sha256_hex(material);
}

std::vector<ManifestEntry> parse_manifest(const nlohmann::json& j) {
  const auto& list = j.is_object() && j.contains("documents") ? j.at("documents") : j;
  if (!list.is_array()) throw FormatError("manifest must be an array of documents");
  std::vector<ManifestEntry> out;
  for (const auto& item : list) {
    ManifestEntry e;
    e.doc_id = item.at("doc_id").get<std::string>();
    e.path = item.value("path", std::string{});
    e.title = item.value("title", e.doc_id);
    e.subject = parse_subject(item.value("subject", std::string("other")));
    if (item.contains("text")) e.text = item.at("text").get<std::string>();
    if (e.doc_id.empty() || e.doc_id.find('#') != std::string::npos) {
      throw FormatError("invalid doc_id '" + e.doc_id + "'");
    }
    if (e.path.empty() && !e.text) throw FormatError("document " + e.doc_id + " has no path or text");
    if (std::any_of(out.begin(), out.end(), [&](const auto& o) { return o.doc_id == e.doc_id; })) {
      throw FormatError("duplicate doc_id '" + e.doc_id + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw NotFound("cannot open manifest " + manifest_path.string());
  try {
    return parse_manifest(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + manifest_path.string() + ": " + e.what());
  }
}

std::vector<CorpusDocument> load_documents(const std::vector<ManifestEntry>& entries,
                                           const std::filesystem::path& base_dir) {
  std::vector<CorpusDocument> docs;
  for (const auto& e : entries) {
    std::string raw;
    if (e.text) {
      raw = *e.text;
    } else {
      const auto path = std::filesystem::path(e.path).is_absolute() ? std::filesystem::path(e.path)
                                                                    : base_dir / e.path;
      std::ifstream in(path, std::ios::binary);
      if (!in) throw NotFound("cannot open document " + path.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      raw = ss.str();
    }
    docs.push_back(ingest(e.doc_id, e.title, e.subject, raw));
  }
  return docs;
}

nlohmann::json to_json(const Chunk& chunk) {
  return {{"doc_id", chunk.id.doc_id},
          {"ordinal", chunk.id.ordinal},
          {"word_begin", chunk.word_begin},
          {"word_end", chunk.word_end},
          {"text", chunk.text}};
}

Chunk chunk_from_json(const nlohmann::json& j) {
  Chunk c;
  c.id = {j.at("doc_id").get<std::string>(), j.at("ordinal").get<std::size_t>()};
  c.word_begin = j.at("word_begin").get<std::size_t>();
  c.word_end = j.at("word_end").get<std::size_t>();
  c.text = j.at("text").get<std::string>();
  return c;
}

nlohmann::json to_json(const Section& section) {
  return {{"doc_id", section.id.doc_id},
          {"ordinal", section.id.ordinal},
          {"chunk_ordinals", section.chunk_ordinals},
          {"screened_out", section.screened_out}};
}

Section section_from_json(const nlohmann::json& j) {
  Section s;
  s.id = {j.at("doc_id").get<std::string>(), j.at("ordinal").get<std::size_t>()};
  s.chunk_ordinals = j.at("chunk_ordinals").get<std::vector<std::size_t>>();
  s.screened_out = j.value("screened_out", false);
  return s;
}

namespace {

template <class T, class Parse>
std::vector<T> read_jsonl(std::istream& in, Parse parse) {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

}  // namespace

void write_chunks_jsonl(std::ostream& out, std::span<const Chunk> chunks) {
  for (const auto& c : chunks) out << to_json(c).dump() << '\n';
}

std::vector<Chunk> read_chunks_jsonl(std::istream& in) {
  return read_jsonl<Chunk>(in, chunk_from_json);
}

void write_sections_jsonl(std::ostream& out, std::span<const Section> sections) {
  for (const auto& s : sections) out << to_json(s).dump() << '\n';
}

std::vector<Section> read_sections_jsonl(std::istream& in) {
  return read_jsonl<Section>(in, section_from_json);
}

}  // namespace classrag::corpus
