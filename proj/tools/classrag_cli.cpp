// classrag command line. Works on a local workspace directory through the
// same operations the HTTP service exposes; `serve` starts that service.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/text.hpp"
#include "classrag/corpus/corpus.hpp"
#include "classrag/service/service.hpp"
#include "classrag/shift/shift.hpp"

namespace {

using nlohmann::json;
using namespace classrag;

service::ApiServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

json wait_for(service::Service& svc, const json& started) {
  const auto id = started.at("job_id").get<std::string>();
  auto job = svc.jobs().wait(id, std::chrono::hours(24));
  if (!job) throw NotFound("job " + id + " vanished");
  if (job->state == service::JobState::failed) {
    throw Error(job->error_code.value_or("JobFailed"), job->error_message.value_or("job failed"));
  }
  return job->to_json();
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(json::parse(line));
  }
  return out;
}

json split_list(const std::string& s) {
  json out = json::array();
  std::istringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    auto t = text::trim(part);
    if (!t.empty()) out.push_back(std::string(t));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"classrag: retrieval-augmented QA over course material"};
  app.require_subcommand(1);

  std::string config_path;
  std::string workspace = "workspace";
  std::string provider;
  bool verbose = false;
  bool show_usage = false;
  app.add_option("--config", config_path, "service config JSON");
  app.add_option("-w,--workspace", workspace, "workspace directory");
  app.add_option("--provider", provider, "mock or http")->check(CLI::IsMember({"mock", "http"}));
  app.add_flag("-v,--verbose", verbose);
  app.add_flag("--usage", show_usage, "print the call ledger after the command");

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "create or list corpora");
  corpus_cmd->require_subcommand(1);
  auto* corpus_create = corpus_cmd->add_subcommand("create", "ingest documents from a manifest");
  std::string manifest_path, corpus_name;
  std::size_t chunk_words = corpus::kDefaultChunkWords;
  corpus_create->add_option("manifest", manifest_path, "manifest JSON")->required()->check(CLI::ExistingFile);
  corpus_create->add_option("--name", corpus_name);
  corpus_create->add_option("--chunk-size", chunk_words, "words per chunk");
  auto* corpus_list = corpus_cmd->add_subcommand("list", "list corpora");

  // index
  auto* index_cmd = app.add_subcommand("index", "build a vector or graph index");
  std::string corpus_id, engine = "vector";
  index_cmd->add_option("corpus", corpus_id)->required();
  index_cmd->add_option("--engine", engine)->check(CLI::IsMember({"vector", "graph"}));

  // graph inspect
  auto* graph_cmd = app.add_subcommand("graph", "inspect a graph index");
  graph_cmd->require_subcommand(1);
  auto* graph_inspect = graph_cmd->add_subcommand("inspect", "entities, levels and summaries");
  std::optional<std::size_t> inspect_level;
  std::size_t inspect_top = 10;
  graph_inspect->add_option("corpus", corpus_id)->required();
  graph_inspect->add_option("--level", inspect_level, "print summaries of this level");
  graph_inspect->add_option("--top", inspect_top, "entities to list, by degree");

  // query
  auto* query_cmd = app.add_subcommand("query", "answer a question");
  std::string question, route = "auto";
  bool mcq = false;
  query_cmd->add_option("corpus", corpus_id)->required();
  query_cmd->add_option("question", question)->required();
  query_cmd->add_option("--route", route, "auto, vector, graph_local or graph_global");
  query_cmd->add_flag("--mcq", mcq, "the question lists options");

  // qagen
  auto* qagen_cmd = app.add_subcommand("qagen", "generate a QA dataset");
  std::size_t n_specific = 0, n_sectional = 0, n_thematic = 0, max_rounds = 3;
  std::uint64_t seed = 1;
  bool no_screen = false;
  qagen_cmd->add_option("corpus", corpus_id)->required();
  qagen_cmd->add_option("--specific", n_specific);
  qagen_cmd->add_option("--sectional", n_sectional);
  qagen_cmd->add_option("--thematic", n_thematic);
  qagen_cmd->add_option("--seed", seed);
  qagen_cmd->add_option("--max-rounds", max_rounds);
  qagen_cmd->add_flag("--no-screen", no_screen);

  // judge
  auto* judge_cmd = app.add_subcommand("judge", "pairwise comparison of two systems");
  std::string dataset_id, systems = "vector,graph_local", criteria = "all";
  std::size_t limit = 0;
  judge_cmd->add_option("corpus", corpus_id)->required();
  judge_cmd->add_option("--dataset", dataset_id)->required();
  judge_cmd->add_option("--systems", systems, "two of vector, graph_local, graph_global, routed");
  judge_cmd->add_option("--criteria", criteria, "all or a comma list");
  judge_cmd->add_option("--limit", limit, "first N questions only");

  // ksqa
  auto* ksqa_cmd = app.add_subcommand("ksqa", "multiple-choice accuracy under retrieval scopes");
  std::string items_path, scopes = "all", ksqa_engines = "routed";
  std::size_t window_radius = 15;
  ksqa_cmd->add_option("corpus", corpus_id)->required();
  ksqa_cmd->add_option("--items", items_path, "items JSONL")->required()->check(CLI::ExistingFile);
  ksqa_cmd->add_option("--scope", scopes, "all or a comma list of short, medium, full");
  ksqa_cmd->add_option("--engine", ksqa_engines, "comma list of systems, or no_retrieval");
  ksqa_cmd->add_option("--window-radius", window_radius);

  // report
  auto* report_cmd = app.add_subcommand("report", "show a stored evaluation report");
  std::string run_id, report_format = "text";
  report_cmd->add_option("run", run_id);
  report_cmd->add_option("--format", report_format)->check(CLI::IsMember({"json", "text", "csv"}));

  auto* usage_cmd = app.add_subcommand("usage", "sum the call ledgers of finished jobs");

  auto* serve_cmd = app.add_subcommand("serve", "run the HTTP service");
  std::string host;
  int port = -1;
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    service::ServiceConfig config;
    if (!config_path.empty()) {
      config = service::ServiceConfig::load(config_path);
    } else {
      config.workspace = workspace;
    }
    if (app.get_option("--workspace")->count() > 0) config.workspace = workspace;
    if (!provider.empty()) config.provider = provider;
    if (!host.empty()) config.host = host;
    if (port >= 0) config.port = port;

    service::Service svc(config, service::make_provider(config));

    if (*corpus_create) {
      const auto entries = corpus::load_manifest(manifest_path);
      const auto base = std::filesystem::path(manifest_path).parent_path();
      json docs = json::array();
      for (const auto& doc : corpus::load_documents(entries, base)) {
        docs.push_back({{"doc_id", doc.doc_id},
                        {"title", doc.title},
                        {"subject", corpus::to_string(doc.subject)},
                        {"text", doc.text}});
      }
      bool created = false;
      auto record = svc.create_corpus(
          {{"name", corpus_name}, {"chunk_size_words", chunk_words}, {"documents", docs}}, created);
      if (!created) spdlog::info("corpus already present");
      print(record);
    } else if (*corpus_list) {
      const auto listed = svc.list_corpora();
      for (const auto& c : listed.at("corpora")) {
        fmt::print("{}  {:<24} chunks={} words={}\n", c.at("corpus_id").get<std::string>(),
                   c.value("name", ""), c.at("chunk_count").get<std::size_t>(),
                   c.at("total_words").get<std::size_t>());
      }
    } else if (*index_cmd) {
      print(wait_for(svc, svc.start_index(corpus_id, {{"engine", engine}})).at("result"));
    } else if (*graph_inspect) {
      const auto index = svc.workspace().load_graph_index(corpus_id);
      const auto& g = index.graph;
      fmt::print("entities={} relationships={} levels={} summaries={}\n", g.nodes.size(), g.edges.size(),
                 index.hierarchy.levels.size(), index.summaries.size());
      for (std::size_t l = 0; l < index.hierarchy.levels.size(); ++l) {
        fmt::print("level {}: {} communities\n", l, index.hierarchy.communities(l).size());
      }
      std::vector<std::pair<std::size_t, std::size_t>> degree;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) degree.emplace_back(g.neighbors(i).size(), i);
      std::sort(degree.begin(), degree.end(), [](auto a, auto b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
      for (std::size_t i = 0; i < std::min(inspect_top, degree.size()); ++i) {
        const auto& node = g.nodes[degree[i].second];
        fmt::print("  {:<32} degree={} chunks={}\n", node.canonical_name, degree[i].first, node.source_chunks.size());
      }
      if (inspect_level) {
        for (const auto& s : index.summaries) {
          if (s.level != *inspect_level) continue;
          fmt::print("\n[{}:{}] {} members{}\n{}\n", s.level, s.community_id, s.members.size(),
                     s.missing ? " (summary missing)" : "", s.text);
        }
      }
    } else if (*query_cmd) {
      const auto q = svc.query({{"corpus_id", corpus_id}, {"question", question}, {"route", route}, {"mcq", mcq}});
      fmt::print("engine: {}\n\n{}\n", q.at("engine").get<std::string>(), q.at("answer").get<std::string>());
      if (!q.at("sources").empty()) {
        fmt::print("\nsources:\n");
        for (const auto& s : q.at("sources")) {
          fmt::print("  {}  {}\n", s.at("chunk_id").get<std::string>(), s.at("excerpt").get<std::string>());
        }
      }
      fmt::print("\nllm_calls={} embedding_calls={} latency_ms={}\n", q.at("llm_calls").get<std::size_t>(),
                 q.at("embedding_calls").get<std::size_t>(), q.at("latency_ms").dump());
    } else if (*qagen_cmd) {
      const auto job = wait_for(svc, svc.start_generate({{"corpus_id", corpus_id},
                                                          {"quotas",
                                                           {{"specific", n_specific},
                                                            {"sectional", n_sectional},
                                                            {"thematic", n_thematic}}},
                                                          {"seed", seed},
                                                          {"max_rounds", max_rounds},
                                                          {"screen", !no_screen}}));
      print(job.at("result"));
    } else if (*judge_cmd) {
      const auto job = wait_for(svc, svc.start_judge({{"corpus_id", corpus_id},
                                                       {"dataset_id", dataset_id},
                                                       {"systems", split_list(systems)},
                                                       {"criteria", criteria},
                                                       {"limit", limit}}));
      const auto id = job.at("result").at("run_id").get<std::string>();
      std::cout << "run " << id << "\n\n" << svc.report_file(id, "text");
    } else if (*ksqa_cmd) {
      const json scope_list = scopes == "all" ? json("all") : split_list(scopes);
      const auto job = wait_for(svc, svc.start_ksqa({{"corpus_id", corpus_id},
                                                      {"items", read_jsonl(items_path)},
                                                      {"scopes", scope_list},
                                                      {"systems", split_list(ksqa_engines)},
                                                      {"window_radius", window_radius}}));
      const auto id = job.at("result").at("run_id").get<std::string>();
      std::cout << "run " << id << "\n\n" << svc.report_file(id, "text");
    } else if (*report_cmd) {
      if (run_id.empty()) {
        const auto runs = svc.list_reports();
        for (const auto& r : runs.at("reports")) std::cout << r.get<std::string>() << "\n";
      } else if (report_format == "json") {
        print(svc.report(run_id));
      } else {
        std::cout << svc.report_file(run_id, report_format);
      }
    } else if (*usage_cmd) {
      llm::UsageLedger total;
      for (const auto& job : svc.jobs().list()) {
        if (job.usage) total += *job.usage;
      }
      std::cout << total.to_report();
    } else if (*serve_cmd) {
      service::ApiServer server(svc);
      const int bound = server.bind(config.host, config.port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      spdlog::set_level(spdlog::level::info);
      spdlog::info("listening on {}:{}", config.host, bound);
      server.listen();
      g_server = nullptr;
    }

    if (show_usage) std::cerr << svc.gateway().usage_snapshot().to_report();
    svc.shutdown();
  } catch (const Error& e) {
    fmt::print(stderr, "error: {} ({})\n", e.what(), e.code());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
