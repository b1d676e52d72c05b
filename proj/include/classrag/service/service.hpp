#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "classrag/graph/graph_engine.hpp"
#include "classrag/llm/gateway.hpp"
#include "classrag/llm/provider.hpp"
#include "classrag/service/jobs.hpp"
#include "classrag/service/workspace.hpp"
#include "classrag/vector/vector_engine.hpp"

namespace httplib {
class Server;
}  // namespace httplib

namespace classrag::service {

struct ServiceConfig {
  std::filesystem::path workspace = "workspace";
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t workers = 2;       // concurrent jobs
  std::size_t parallelism = 4;   // provider calls in flight per job
  std::optional<std::string> token;  // shared bearer token; none disables auth
  std::string provider = "mock";     // "mock" or "http"
  bool mock_synthetic = true;
  std::optional<std::filesystem::path> mock_script;

  // Relative paths resolve against `base_dir`. Throws FormatError.
  static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ServiceConfig load(const std::filesystem::path& path);
};

// Mock providers come from the config; the http provider reads its endpoint
// and key from the environment.
std::shared_ptr<llm::Provider> make_provider(const ServiceConfig& config);

// Error code to HTTP status.
int http_status(const std::string& code);

// Operations behind every endpoint. Methods return JSON bodies and throw
// classrag::Error; long-running work is submitted to the job queue.
class Service {
 public:
  Service(ServiceConfig config, std::shared_ptr<llm::Provider> provider, llm::GatewayOptions gateway_options = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // {name?, chunk_size_words?, documents: [{doc_id, title?, subject?, text}]}.
  // `created` is false when identical content already exists.
  nlohmann::json create_corpus(const nlohmann::json& body, bool& created);
  nlohmann::json list_corpora() const;
  nlohmann::json get_corpus(const std::string& corpus_id) const;

  // {engine: vector|graph}. Returns the queued job.
  nlohmann::json start_index(const std::string& corpus_id, const nlohmann::json& body);
  nlohmann::json get_job(const std::string& job_id) const;
  nlohmann::json list_jobs() const;

  // {corpus_id, question, route?: auto|vector|graph_local|graph_global,
  //  override?: engine, mcq?: bool}. Throws IndexMissing when the engine it
  // needs has no index.
  nlohmann::json query(const nlohmann::json& body);
  nlohmann::json get_query(const std::string& query_id) const;
  nlohmann::json list_queries(const std::optional<std::string>& corpus_id) const;

  // {corpus_id, quotas: {specific, sectional, thematic}, seed?, max_rounds?}
  nlohmann::json start_generate(const nlohmann::json& body);
  nlohmann::json list_datasets() const;
  nlohmann::json get_dataset(const std::string& dataset_id) const;

  // {corpus_id, dataset_id, systems: "a,b" | [a, b], criteria?: "all" | [...], limit?}
  nlohmann::json start_judge(const nlohmann::json& body);
  // {corpus_id, items: [...], scopes?: "all" | [...], systems?: [...], window_radius?}
  nlohmann::json start_ksqa(const nlohmann::json& body);

  nlohmann::json report(const std::string& run_id) const;
  // format: "text" or "csv".
  std::string report_file(const std::string& run_id, const std::string& format) const;
  nlohmann::json list_reports() const;

  nlohmann::json usage() const;

  // Fails queued jobs and waits for running ones.
  void shutdown();

  const ServiceConfig& config() const { return config_; }
  Workspace& workspace() { return workspace_; }
  llm::Gateway& gateway() { return *gateway_; }
  JobQueue& jobs() { return *jobs_; }

 private:
  struct Engines {
    std::shared_ptr<const vector::VectorEngine> vector;
    std::shared_ptr<const graph::GraphEngine> graph;
  };
  Engines engines(const std::string& corpus_id);
  void forget_engines(const std::string& corpus_id);

  ServiceConfig config_;
  Workspace workspace_;
  std::unique_ptr<llm::Gateway> gateway_;
  std::mutex engines_mutex_;
  std::map<std::string, Engines> engines_;
  std::unique_ptr<JobQueue> jobs_;
};

// HTTP front end. Every response body is JSON except report text/csv; errors
// are {code, message}. POSTs carrying an Idempotency-Key header replay the
// first response for that key; reusing a key for a different request is a
// conflict.
class ApiServer {
 public:
  explicit ApiServer(Service& service);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  void install_routes();

  Service& service_;
  std::unique_ptr<httplib::Server> server_;
  std::mutex idempotency_mutex_;
  std::map<std::string, std::shared_ptr<std::mutex>> in_flight_;
};

}  // namespace classrag::service
