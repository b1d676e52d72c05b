#include "classrag/service/workspace.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "classrag/common/error.hpp"
#include "classrag/common/hash.hpp"
#include "classrag/common/text.hpp"

namespace fs = std::filesystem;

namespace classrag::service {

corpus::Subject CorpusRecord::subject() const {
  std::map<corpus::Subject, std::size_t> counts;
  for (const auto& d : documents) ++counts[d.subject];
  corpus::Subject best = corpus::Subject::other;
  std::size_t best_count = 0;
  for (const auto& [s, n] : counts) {
    if (n > best_count) {
      best = s;
      best_count = n;
    }
  }
  return best;
}

nlohmann::json CorpusRecord::to_json() const {
  auto docs = nlohmann::json::array();
  for (const auto& d : documents) {
    docs.push_back({{"doc_id", d.doc_id},
                    {"title", d.title},
                    {"subject", corpus::to_string(d.subject)},
                    {"words", d.words},
                    {"chunks", d.chunks}});
  }
  return {{"format", "classrag.corpus"},
          {"version", Workspace::kFormatVersion},
          {"corpus_id", corpus_id},
          {"name", name},
          {"chunk_size_words", chunk_size_words},
          {"fingerprint", fingerprint},
          {"total_words", total_words},
          {"chunk_count", chunk_count},
          {"documents", docs}};
}

CorpusRecord CorpusRecord::from_json(const nlohmann::json& j) {
  CorpusRecord r;
  r.corpus_id = j.at("corpus_id").get<std::string>();
  r.name = j.value("name", "");
  r.chunk_size_words = j.value("chunk_size_words", corpus::kDefaultChunkWords);
  r.fingerprint = j.value("fingerprint", "");
  r.total_words = j.value("total_words", std::size_t{0});
  r.chunk_count = j.value("chunk_count", std::size_t{0});
  for (const auto& d : j.at("documents")) {
    r.documents.push_back({d.at("doc_id").get<std::string>(), d.value("title", ""),
                           corpus::parse_subject(d.value("subject", "other")), d.value("words", std::size_t{0}),
                           d.value("chunks", std::size_t{0})});
  }
  return r;
}

std::string_view to_string(IndexKind kind) { return kind == IndexKind::vector ? "vector" : "graph"; }

std::optional<IndexKind> parse_index_kind(std::string_view name) {
  const auto n = text::normalize_spaces_lower(name);
  if (n == "vector") return IndexKind::vector;
  if (n == "graph" || n == "graph_local" || n == "graph_global") return IndexKind::graph;
  return std::nullopt;
}

FileLock::FileLock(const fs::path& path) {
  fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("IoError", "cannot open lock file " + path.string());
  if (::flock(fd_, LOCK_EX) != 0) {
    ::close(fd_);
    throw Error("IoError", "cannot lock " + path.string());
  }
}

FileLock::~FileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  const auto tmp = path.string() + fmt::format(".tmp{}.{}", ::getpid(), counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("IoError", "cannot write " + tmp);
    out << content;
    if (!out.flush()) throw Error("IoError", "short write to " + tmp);
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool valid_id(std::string_view id) {
  if (id.empty() || id.size() > 128 || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

std::string new_id(std::string_view prefix) {
  thread_local std::mt19937_64 rng(std::random_device{}());
  return fmt::format("{}-{:012x}", prefix, rng() & 0xffffffffffffULL);
}

namespace {

void require_id(std::string_view id, std::string_view what) {
  if (!valid_id(id)) throw InvalidArgument(fmt::format("invalid {} id '{}'", what, id));
}

nlohmann::json parse_json_file(const fs::path& path) {
  const auto content = read_file(path);
  try {
    return nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<std::string> subdirectories(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path().filename().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
  for (const char* sub : {"corpora", "indexes", "datasets", "runs", "queries", "jobs", "idempotency"}) {
    fs::create_directories(root_ / sub);
  }
}

fs::path Workspace::corpus_dir(const std::string& corpus_id) const {
  require_id(corpus_id, "corpus");
  return root_ / "corpora" / corpus_id;
}

fs::path Workspace::index_dir(const std::string& corpus_id) const {
  require_id(corpus_id, "corpus");
  return root_ / "indexes" / corpus_id;
}

std::pair<CorpusRecord, bool> Workspace::create_corpus(const std::string& name,
                                                       std::vector<corpus::CorpusDocument> docs,
                                                       std::size_t chunk_size_words) {
  if (docs.empty()) throw InvalidArgument("a corpus needs at least one document");
  CorpusRecord r;
  r.name = name;
  r.chunk_size_words = chunk_size_words;
  std::vector<corpus::Chunk> all;
  std::string identity = fmt::format("{}\n", chunk_size_words);
  std::set<std::string> ids;
  for (const auto& d : docs) {
    if (!ids.insert(d.doc_id).second) throw InvalidArgument("duplicate doc_id " + d.doc_id);
    auto chunks = corpus::chunk_document(d, chunk_size_words);
    r.documents.push_back({d.doc_id, d.title, d.subject, d.words.size(), chunks.size()});
    r.total_words += d.words.size();
    identity += fmt::format("{}\x1f{}\x1f{}\n", d.doc_id, d.title, corpus::to_string(d.subject));
    all.insert(all.end(), std::make_move_iterator(chunks.begin()), std::make_move_iterator(chunks.end()));
  }
  r.chunk_count = all.size();
  r.fingerprint = corpus::corpus_fingerprint(all);
  r.corpus_id = "c-" + sha256_hex(identity + r.fingerprint).substr(0, 12);

  const auto dir = corpus_dir(r.corpus_id);
  fs::create_directories(dir);
  FileLock lock(dir / ".lock");
  if (fs::exists(dir / "corpus.json")) return {corpus(r.corpus_id), false};

  std::string documents;
  for (const auto& d : docs) {
    documents += nlohmann::json{{"doc_id", d.doc_id},
                                {"title", d.title},
                                {"subject", corpus::to_string(d.subject)},
                                {"text", d.text}}
                     .dump() +
                 "\n";
  }
  std::ostringstream chunks;
  corpus::write_chunks_jsonl(chunks, all);
  write_file_atomic(dir / "documents.jsonl", documents);
  write_file_atomic(dir / "chunks.jsonl", chunks.str());
  // Written last: its presence marks the corpus complete.
  write_file_atomic(dir / "corpus.json", r.to_json().dump(2));
  return {r, true};
}

std::vector<CorpusRecord> Workspace::list_corpora() const {
  std::vector<CorpusRecord> out;
  for (const auto& id : subdirectories(root_ / "corpora")) {
    if (valid_id(id) && fs::exists(root_ / "corpora" / id / "corpus.json")) out.push_back(corpus(id));
  }
  return out;
}

CorpusRecord Workspace::corpus(const std::string& corpus_id) const {
  const auto path = corpus_dir(corpus_id) / "corpus.json";
  if (!fs::exists(path)) throw NotFound("no corpus " + corpus_id);
  return CorpusRecord::from_json(parse_json_file(path));
}

std::vector<corpus::CorpusDocument> Workspace::documents(const std::string& corpus_id) const {
  const auto record = corpus(corpus_id);
  std::istringstream in(read_file(corpus_dir(corpus_id) / "documents.jsonl"));
  std::vector<corpus::CorpusDocument> out;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back(corpus::ingest(j.at("doc_id").get<std::string>(), j.value("title", ""),
                                 corpus::parse_subject(j.value("subject", "other")),
                                 j.at("text").get<std::string>()));
  }
  return out;
}

std::vector<corpus::Chunk> Workspace::chunks(const std::string& corpus_id) const {
  corpus(corpus_id);
  std::istringstream in(read_file(corpus_dir(corpus_id) / "chunks.jsonl"));
  return corpus::read_chunks_jsonl(in);
}

bool Workspace::has_index(const std::string& corpus_id, IndexKind kind) const {
  return fs::exists(index_dir(corpus_id) / fmt::format("{}.json", to_string(kind)));
}

void Workspace::save_vector_index(const std::string& corpus_id, const vector::VectorIndex& index) {
  const auto dir = index_dir(corpus_id);
  fs::create_directories(dir);
  FileLock lock(corpus_dir(corpus_id) / ".lock");
  write_file_atomic(dir / "vector.json", index.to_json().dump());
}

void Workspace::save_graph_index(const std::string& corpus_id, const graph::GraphIndex& index) {
  const auto dir = index_dir(corpus_id);
  fs::create_directories(dir);
  FileLock lock(corpus_dir(corpus_id) / ".lock");
  write_file_atomic(dir / "graph.json", index.to_json().dump());
}

vector::VectorIndex Workspace::load_vector_index(const std::string& corpus_id) const {
  if (!has_index(corpus_id, IndexKind::vector)) throw IndexMissing("no vector index for " + corpus_id);
  return vector::VectorIndex::from_json(parse_json_file(index_dir(corpus_id) / "vector.json"));
}

graph::GraphIndex Workspace::load_graph_index(const std::string& corpus_id) const {
  if (!has_index(corpus_id, IndexKind::graph)) throw IndexMissing("no graph index for " + corpus_id);
  return graph::GraphIndex::from_json(parse_json_file(index_dir(corpus_id) / "graph.json"));
}

std::string Workspace::save_dataset(const qagen::QADataset& dataset) {
  const auto id = new_id("ds");
  qagen::save_dataset(root_ / "datasets" / id, dataset);
  return id;
}

qagen::QADataset Workspace::load_dataset(const std::string& dataset_id) const {
  require_id(dataset_id, "dataset");
  const auto dir = root_ / "datasets" / dataset_id;
  if (!fs::exists(dir)) throw NotFound("no dataset " + dataset_id);
  return qagen::load_dataset(dir);
}

std::vector<std::string> Workspace::list_datasets() const { return subdirectories(root_ / "datasets"); }

void Workspace::save_run(const std::string& run_id, const nlohmann::json& report,
                         const std::vector<std::pair<std::string, std::string>>& files) {
  require_id(run_id, "run");
  const auto dir = root_ / "runs" / run_id;
  for (const auto& [name, content] : files) {
    require_id(name, "file");
    write_file_atomic(dir / name, content);
  }
  write_file_atomic(dir / "report.json", report.dump(2));
}

nlohmann::json Workspace::load_run(const std::string& run_id) const {
  require_id(run_id, "run");
  const auto path = root_ / "runs" / run_id / "report.json";
  if (!fs::exists(path)) throw NotFound("no report " + run_id);
  return parse_json_file(path);
}

std::string Workspace::load_run_file(const std::string& run_id, const std::string& name) const {
  require_id(run_id, "run");
  require_id(name, "file");
  const auto path = root_ / "runs" / run_id / name;
  if (!fs::exists(path)) throw NotFound(fmt::format("no {} for report {}", name, run_id));
  return read_file(path);
}

std::vector<std::string> Workspace::list_runs() const { return subdirectories(root_ / "runs"); }

void Workspace::save_query(const nlohmann::json& record) {
  const auto id = record.at("query_id").get<std::string>();
  require_id(id, "query");
  write_file_atomic(root_ / "queries" / (id + ".json"), record.dump(2));
}

nlohmann::json Workspace::load_query(const std::string& query_id) const {
  require_id(query_id, "query");
  const auto path = root_ / "queries" / (query_id + ".json");
  if (!fs::exists(path)) throw NotFound("no query " + query_id);
  return parse_json_file(path);
}

std::vector<nlohmann::json> Workspace::list_queries(const std::optional<std::string>& corpus_id) const {
  std::vector<nlohmann::json> out;
  for (const auto& e : fs::directory_iterator(root_ / "queries")) {
    if (e.path().extension() != ".json") continue;
    auto j = parse_json_file(e.path());
    if (corpus_id && j.value("corpus_id", "") != *corpus_id) continue;
    out.push_back(std::move(j));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::make_pair(a.value("sequence", std::uint64_t{0}), a.value("query_id", "")) <
           std::make_pair(b.value("sequence", std::uint64_t{0}), b.value("query_id", ""));
  });
  return out;
}

}  // namespace classrag::service
