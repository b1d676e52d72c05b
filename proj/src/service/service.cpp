#include "classrag/service/service.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/parallel.hpp"
#include "classrag/common/text.hpp"
#include "classrag/judge/judge.hpp"
#include "classrag/llm/http_provider.hpp"
#include "classrag/llm/mock_provider.hpp"
#include "classrag/qagen/qagen.hpp"
#include "classrag/router/router.hpp"
#include "classrag/shift/shift.hpp"

namespace fs = std::filesystem;

namespace classrag::service {

ServiceConfig ServiceConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw FormatError("service config must be a JSON object");
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  ServiceConfig c;
  try {
    if (j.contains("workspace")) c.workspace = resolve(j.at("workspace").get<std::string>());
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.workers = j.value("workers", c.workers);
    c.parallelism = j.value("parallelism", c.parallelism);
    if (j.contains("token") && !j.at("token").is_null()) c.token = j.at("token").get<std::string>();
    c.provider = j.value("provider", c.provider);
    c.mock_synthetic = j.value("mock_synthetic", c.mock_synthetic);
    if (j.contains("mock_script")) c.mock_script = resolve(j.at("mock_script").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("service config: {}", e.what()));
  }
  if (c.provider != "mock" && c.provider != "http") throw FormatError("provider must be 'mock' or 'http'");
  if (c.port < 0 || c.port > 65535) throw FormatError("port out of range");
  if (c.workers == 0 || c.parallelism == 0) throw FormatError("workers and parallelism must be positive");
  return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("config {}: {}", path.string(), e.what()));
  }
  return from_json(j, path.parent_path());
}

std::shared_ptr<llm::Provider> make_provider(const ServiceConfig& config) {
  if (config.provider == "http") return std::make_shared<llm::HttpProvider>(llm::HttpProviderConfig::from_env());
  if (config.mock_script) return llm::MockProvider::from_script_file(*config.mock_script);
  llm::MockOptions options;
  options.synthetic = config.mock_synthetic;
  return std::make_shared<llm::MockProvider>(options);
}

int http_status(const std::string& code) {
  if (code == "NotFound") return 404;
  if (code == "IndexMissing" || code == "Conflict" || code == "NoGraph" || code == "FingerprintMismatch") return 409;
  if (code == "Unauthorized") return 401;
  if (code == "NoEvidence") return 422;
  if (code == "TransportError" || code == "ProviderRefusal") return 502;
  if (code == "InvalidArgument" || code == "FormatError" || code == "InvalidK" || code == "UnknownAnchor" ||
      code == "EmptyDocument" || code == "ZeroComparisons" || code == "DimensionMismatch") {
    return 400;
  }
  return 500;
}

namespace {

std::string required_string(const nlohmann::json& body, const char* key) {
  if (!body.is_object() || !body.contains(key) || !body.at(key).is_string()) {
    throw InvalidArgument(fmt::format("'{}' is required", key));
  }
  auto s = body.at(key).get<std::string>();
  if (text::trim(s).empty()) throw InvalidArgument(fmt::format("'{}' must not be empty", key));
  return s;
}

// "a,b", ["a", "b"] or "all".
std::vector<std::string> string_list(const nlohmann::json& value) {
  std::vector<std::string> out;
  if (value.is_array()) {
    for (const auto& v : value) out.push_back(v.get<std::string>());
  } else if (value.is_string()) {
    const auto s = value.get<std::string>();
    std::size_t start = 0;
    while (start <= s.size()) {
      auto end = s.find(',', start);
      if (end == std::string::npos) end = s.size();
      auto part = std::string(text::trim(std::string_view(s).substr(start, end - start)));
      if (!part.empty()) out.push_back(part);
      start = end + 1;
    }
  } else {
    throw InvalidArgument("expected a string or an array of strings");
  }
  return out;
}

EngineKind required_engine(const std::string& name) {
  auto e = parse_engine(name);
  if (!e) throw InvalidArgument(fmt::format("unknown engine '{}'", name));
  return *e;
}

std::uint64_t now_ms() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
}

nlohmann::json sources_json(const std::vector<corpus::ChunkId>& ids, const std::vector<corpus::Chunk>& chunks) {
  auto out = nlohmann::json::array();
  for (const auto& id : ids) {
    auto it = std::find_if(chunks.begin(), chunks.end(), [&](const corpus::Chunk& c) { return c.id == id; });
    std::string excerpt;
    if (it != chunks.end() && it->id == id) excerpt = text::truncate_utf8(it->text, 300);
    out.push_back({{"chunk_id", id.str()}, {"excerpt", excerpt}});
  }
  return out;
}

}  // namespace

Service::Service(ServiceConfig config, std::shared_ptr<llm::Provider> provider, llm::GatewayOptions gateway_options)
    : config_(std::move(config)), workspace_(config_.workspace) {
  gateway_ = std::make_unique<llm::Gateway>(std::move(provider), std::move(gateway_options));
  jobs_ = std::make_unique<JobQueue>(workspace_.journal_path(), config_.workers,
                                     [this] { return gateway_->usage_snapshot(); });
}

Service::~Service() { shutdown(); }

void Service::shutdown() {
  if (jobs_) jobs_->shutdown();
}

nlohmann::json Service::create_corpus(const nlohmann::json& body, bool& created) {
  if (!body.is_object() || !body.contains("documents")) throw InvalidArgument("'documents' is required");
  const auto entries = corpus::parse_manifest(body);
  for (const auto& e : entries) {
    if (!e.text) throw InvalidArgument("document " + e.doc_id + " must carry inline text");
    if (!valid_id(e.doc_id)) throw InvalidArgument("invalid doc_id '" + e.doc_id + "'");
  }
  auto docs = corpus::load_documents(entries, {});
  const auto chunk_size = body.value("chunk_size_words", corpus::kDefaultChunkWords);
  if (chunk_size == 0) throw InvalidArgument("chunk_size_words must be positive");
  auto [record, fresh] = workspace_.create_corpus(body.value("name", ""), std::move(docs), chunk_size);
  created = fresh;
  return get_corpus(record.corpus_id);
}

nlohmann::json Service::list_corpora() const {
  auto out = nlohmann::json::array();
  for (const auto& c : workspace_.list_corpora()) out.push_back(get_corpus(c.corpus_id));
  return {{"corpora", out}};
}

nlohmann::json Service::get_corpus(const std::string& corpus_id) const {
  auto j = workspace_.corpus(corpus_id).to_json();
  j["indexes"] = {{"vector", workspace_.has_index(corpus_id, IndexKind::vector)},
                  {"graph", workspace_.has_index(corpus_id, IndexKind::graph)}};
  return j;
}

Service::Engines Service::engines(const std::string& corpus_id) {
  std::lock_guard lock(engines_mutex_);
  auto& e = engines_[corpus_id];
  if ((!e.vector && workspace_.has_index(corpus_id, IndexKind::vector)) ||
      (!e.graph && workspace_.has_index(corpus_id, IndexKind::graph))) {
    const auto chunks = workspace_.chunks(corpus_id);
    if (!e.vector && workspace_.has_index(corpus_id, IndexKind::vector)) {
      e.vector = std::make_shared<vector::VectorEngine>(*gateway_, chunks, workspace_.load_vector_index(corpus_id));
    }
    if (!e.graph && workspace_.has_index(corpus_id, IndexKind::graph)) {
      e.graph = std::make_shared<graph::GraphEngine>(*gateway_, chunks, workspace_.load_graph_index(corpus_id));
    }
  }
  return e;
}

void Service::forget_engines(const std::string& corpus_id) {
  std::lock_guard lock(engines_mutex_);
  engines_.erase(corpus_id);
}

nlohmann::json Service::start_index(const std::string& corpus_id, const nlohmann::json& body) {
  workspace_.corpus(corpus_id);
  const auto kind = parse_index_kind(required_string(body, "engine"));
  if (!kind) throw InvalidArgument("engine must be 'vector' or 'graph'");
  const auto job_kind = *kind == IndexKind::vector ? JobKind::index_vector : JobKind::index_graph;
  const auto id = jobs_->submit(job_kind, {{"corpus_id", corpus_id}, {"engine", to_string(*kind)}},
                                [this, corpus_id, kind = *kind](JobContext& ctx) -> nlohmann::json {
                                  const auto chunks = workspace_.chunks(corpus_id);
                                  ctx.progress(0.05);
                                  nlohmann::json result = {{"corpus_id", corpus_id}};
                                  if (kind == IndexKind::vector) {
                                    vector::VectorBuildOptions options;
                                    options.parallelism = config_.parallelism;
                                    const auto index = vector::build_vector_index(*gateway_, chunks, options);
                                    workspace_.save_vector_index(corpus_id, index);
                                    result["entries"] = index.entries.size();
                                  } else {
                                    graph::GraphBuildOptions options;
                                    options.parallelism = config_.parallelism;
                                    options.summaries.parallelism = config_.parallelism;
                                    const auto index = graph::build_graph_index(*gateway_, chunks, options);
                                    workspace_.save_graph_index(corpus_id, index);
                                    result["entities"] = index.graph.nodes.size();
                                    result["relationships"] = index.graph.edges.size();
                                    result["levels"] = index.hierarchy.levels.size();
                                    result["summaries"] = index.summaries.size();
                                  }
                                  forget_engines(corpus_id);
                                  return result;
                                });
  return get_job(id);
}

nlohmann::json Service::get_job(const std::string& job_id) const {
  auto job = jobs_->get(job_id);
  if (!job) throw NotFound("no job " + job_id);
  return job->to_json();
}

nlohmann::json Service::list_jobs() const {
  auto out = nlohmann::json::array();
  for (const auto& j : jobs_->list()) out.push_back(j.to_json());
  return {{"jobs", out}};
}

nlohmann::json Service::query(const nlohmann::json& body) {
  const auto corpus_id = required_string(body, "corpus_id");
  const auto question = required_string(body, "question");
  const auto record = workspace_.corpus(corpus_id);

  std::optional<EngineKind> override_engine;
  const auto route = body.value("route", std::string("auto"));
  if (route != "auto") override_engine = required_engine(route);
  if (body.contains("override") && !body.at("override").is_null()) {
    override_engine = required_engine(body.at("override").get<std::string>());
  }
  const bool mcq = body.value("mcq", false);

  const auto loaded = engines(corpus_id);
  if (!loaded.vector && !loaded.graph) throw IndexMissing("corpus " + corpus_id + " has no index yet");
  router::EngineSet set;
  set.vector = loaded.vector.get();
  set.graph = loaded.graph.get();
  set.global_options.parallelism = config_.parallelism;
  if (override_engine && !set.has(*override_engine)) {
    throw IndexMissing(fmt::format("no {} index for corpus {}", to_string(*override_engine), corpus_id));
  }
  router::CorpusStats stats{record.total_words, record.chunk_count, record.subject()};

  const auto started = std::chrono::steady_clock::now();
  const auto routed = router::route_and_answer(*gateway_, question, set, stats, mcq, override_engine);
  const auto latency =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

  const auto& chunks = loaded.vector ? loaded.vector->chunks() : workspace_.chunks(corpus_id);
  nlohmann::json q = {{"query_id", new_id("q")},
                      {"corpus_id", corpus_id},
                      {"question", question},
                      {"decision", router::to_json(routed.decision)},
                      {"engine", to_string(routed.answer.engine)},
                      {"answer", routed.answer.text},
                      {"sources", sources_json(routed.answer.cited_chunk_ids, chunks)},
                      {"context_chunk_ids", nlohmann::json::array()},
                      {"latency_ms", latency},
                      {"llm_calls", routed.usage.total_llm_calls()},
                      {"embedding_calls", routed.usage.total_embedding_calls()},
                      {"usage", routed.usage.to_json()},
                      {"sequence", now_ms()}};
  for (const auto& id : routed.answer.context_chunk_ids) q["context_chunk_ids"].push_back(id.str());
  workspace_.save_query(q);
  return q;
}

nlohmann::json Service::get_query(const std::string& query_id) const { return workspace_.load_query(query_id); }

nlohmann::json Service::list_queries(const std::optional<std::string>& corpus_id) const {
  return {{"queries", workspace_.list_queries(corpus_id)}};
}

nlohmann::json Service::start_generate(const nlohmann::json& body) {
  const auto corpus_id = required_string(body, "corpus_id");
  workspace_.corpus(corpus_id);
  qagen::PipelineOptions options;
  if (!body.contains("quotas") || !body.at("quotas").is_object()) throw InvalidArgument("'quotas' is required");
  const auto& q = body.at("quotas");
  options.quotas.specific = q.value("specific", std::size_t{0});
  options.quotas.sectional = q.value("sectional", std::size_t{0});
  options.quotas.thematic = q.value("thematic", std::size_t{0});
  options.seed = body.value("seed", options.seed);
  options.max_rounds = body.value("max_rounds", options.max_rounds);
  options.screen = body.value("screen", options.screen);
  options.parallelism = config_.parallelism;
  const auto id = jobs_->submit(JobKind::qagen, body, [this, corpus_id, options](JobContext&) -> nlohmann::json {
    const auto docs = workspace_.documents(corpus_id);
    auto opts = options;
    opts.chunk_size_words = workspace_.corpus(corpus_id).chunk_size_words;
    auto dataset = qagen::generate_dataset(*gateway_, docs, opts);
    dataset.manifest["corpus_id"] = corpus_id;
    const auto dataset_id = workspace_.save_dataset(dataset);
    const auto counts = dataset.counts();
    return {{"dataset_id", dataset_id},
            {"counts",
             {{"specific", counts.specific}, {"sectional", counts.sectional}, {"thematic", counts.thematic}}}};
  });
  return get_job(id);
}

nlohmann::json Service::list_datasets() const { return {{"datasets", workspace_.list_datasets()}}; }

nlohmann::json Service::get_dataset(const std::string& dataset_id) const {
  const auto ds = workspace_.load_dataset(dataset_id);
  auto pairs = nlohmann::json::array();
  for (const auto& p : ds.pairs) pairs.push_back(qagen::to_json(p));
  return {{"dataset_id", dataset_id}, {"manifest", ds.manifest}, {"pairs", pairs}};
}

namespace {

// A system under evaluation: an engine, or the router choosing one.
struct EvalSystem {
  std::string name;
  std::optional<EngineKind> engine;  // empty: routed
};

EvalSystem parse_eval_system(const std::string& name) {
  const auto n = text::normalize_spaces_lower(name);
  if (n == "route" || n == "routed") return {"routed", std::nullopt};
  return {std::string(to_string(required_engine(n))), required_engine(n)};
}

}  // namespace

nlohmann::json Service::start_judge(const nlohmann::json& body) {
  const auto corpus_id = required_string(body, "corpus_id");
  const auto dataset_id = required_string(body, "dataset_id");
  const auto record = workspace_.corpus(corpus_id);
  workspace_.load_dataset(dataset_id);
  if (!body.contains("systems")) throw InvalidArgument("'systems' is required");
  const auto names = string_list(body.at("systems"));
  if (names.size() != 2) throw InvalidArgument("judge runs compare exactly two systems");
  const auto x = parse_eval_system(names[0]);
  const auto y = parse_eval_system(names[1]);
  if (x.name == y.name) throw InvalidArgument("the two systems must differ");
  const auto criteria = judge::parse_criteria(body.value("criteria", std::string("all")));
  const auto limit = body.value("limit", std::size_t{0});

  const auto run_id = new_id("run");
  nlohmann::json params = body;
  params["run_id"] = run_id;
  const auto id = jobs_->submit(JobKind::judge_run, params, [=, this](JobContext& ctx) -> nlohmann::json {
    const auto loaded = engines(corpus_id);
    router::EngineSet set;
    set.vector = loaded.vector.get();
    set.graph = loaded.graph.get();
    for (const auto& s : {x, y}) {
      if (s.engine && !set.has(*s.engine)) {
        throw IndexMissing(fmt::format("no {} index for corpus {}", s.name, corpus_id));
      }
    }
    if (!set.vector && !set.graph) throw IndexMissing("corpus " + corpus_id + " has no index yet");
    const router::CorpusStats stats{record.total_words, record.chunk_count, record.subject()};
    std::map<std::string, corpus::Subject> subjects;
    for (const auto& d : record.documents) subjects[d.doc_id] = d.subject;

    auto dataset = workspace_.load_dataset(dataset_id);
    if (limit > 0 && dataset.pairs.size() > limit) dataset.pairs.resize(limit);
    std::vector<judge::PairwiseItem> items(dataset.pairs.size());
    auto answer = [&](const EvalSystem& s, const std::string& question) {
      try {
        const auto a = s.engine ? set.run(*s.engine, question)
                                : router::route_and_answer(*gateway_, question, set, stats).answer;
        if (!text::trim(a.text).empty()) return a.text;
      } catch (const Error& e) {
        spdlog::warn("{} could not answer: {} ({})", s.name, e.what(), e.code());
      }
      return std::string("No answer was produced.");
    };
    parallel_for(items.size(), config_.parallelism, [&](std::size_t i) {
      auto& item = items[i];
      item.qa = dataset.pairs[i];
      auto it = subjects.find(item.qa.doc_id);
      item.subject = it == subjects.end() ? record.subject() : it->second;
      item.system_x = x.name;
      item.system_y = y.name;
      item.answer_x = answer(x, item.qa.question);
      item.answer_y = answer(y, item.qa.question);
    });
    ctx.progress(0.5);
    const auto comparisons = judge::run_pairwise(*gateway_, items, criteria, config_.parallelism);
    const auto table = judge::tabulate(comparisons);
    std::ostringstream verdicts;
    judge::write_comparisons_jsonl(verdicts, comparisons);
    nlohmann::json report = {{"run_id", run_id},
                             {"kind", "judge"},
                             {"corpus_id", corpus_id},
                             {"dataset_id", dataset_id},
                             {"systems", {x.name, y.name}},
                             {"comparisons", comparisons.size()},
                             {"table", table.to_json()}};
    workspace_.save_run(run_id, report,
                        {{"report.txt", table.to_text()}, {"report.csv", table.to_csv()},
                         {"verdicts.jsonl", verdicts.str()}});
    return {{"run_id", run_id}, {"comparisons", comparisons.size()}};
  });
  return get_job(id);
}

nlohmann::json Service::start_ksqa(const nlohmann::json& body) {
  const auto corpus_id = required_string(body, "corpus_id");
  workspace_.corpus(corpus_id);
  if (!body.contains("items") || !body.at("items").is_array()) throw InvalidArgument("'items' must be an array");
  std::vector<shift::KsqaItem> items;
  for (const auto& j : body.at("items")) items.push_back(shift::ksqa_item_from_json(j));

  std::vector<corpus::Scope> scopes;
  const auto scope_names = string_list(body.value("scopes", nlohmann::json("all")));
  for (const auto& s : scope_names) {
    if (s == "all") {
      scopes = {corpus::Scope::chunk, corpus::Scope::window, corpus::Scope::document};
      break;
    }
    auto scope = corpus::parse_scope(s);
    if (!scope) throw InvalidArgument(fmt::format("unknown scope '{}'", s));
    scopes.push_back(*scope);
  }
  std::vector<shift::System> systems;
  for (const auto& s : string_list(body.value("systems", nlohmann::json("routed")))) {
    auto system = shift::parse_system(s);
    if (!system) throw InvalidArgument(fmt::format("unknown system '{}'", s));
    systems.push_back(*system);
  }
  shift::KsqaOptions options;
  options.parallelism = config_.parallelism;
  options.window_radius = body.value("window_radius", options.window_radius);

  const auto run_id = new_id("run");
  nlohmann::json params = body;
  params.erase("items");
  params["item_count"] = items.size();
  params["run_id"] = run_id;
  const auto id = jobs_->submit(JobKind::ksqa_run, params, [=, this](JobContext& ctx) -> nlohmann::json {
    shift::ShiftCorpus corpus;
    for (auto& c : workspace_.chunks(corpus_id)) corpus.documents[c.id.doc_id].push_back(std::move(c));
    shift::IndexCache cache;
    shift::AccuracyReport report;
    const double cells = static_cast<double>(scopes.size() * systems.size());
    double done = 0;
    for (auto scope : scopes) {
      for (auto system : systems) {
        report.merge(shift::run_ksqa(*gateway_, items, scope, system, corpus, cache, options));
        ctx.progress(++done / cells);
      }
    }
    auto j = report.to_json();
    j["run_id"] = run_id;
    j["kind"] = "ksqa";
    j["corpus_id"] = corpus_id;
    workspace_.save_run(run_id, j, {{"report.txt", report.to_text()}, {"report.csv", report.to_csv()}});
    return {{"run_id", run_id}, {"skipped", report.skipped.size()}};
  });
  return get_job(id);
}

nlohmann::json Service::report(const std::string& run_id) const { return workspace_.load_run(run_id); }

std::string Service::report_file(const std::string& run_id, const std::string& format) const {
  if (format != "text" && format != "csv") throw InvalidArgument("format must be json, text or csv");
  return workspace_.load_run_file(run_id, format == "text" ? "report.txt" : "report.csv");
}

nlohmann::json Service::list_reports() const { return {{"reports", workspace_.list_runs()}}; }

nlohmann::json Service::usage() const {
  const auto ledger = gateway_->usage_snapshot();
  return {{"usage", ledger.to_json()},
          {"report", ledger.to_report()},
          {"llm_calls", ledger.total_llm_calls()},
          {"embedding_calls", ledger.total_embedding_calls()}};
}

}  // namespace classrag::service
