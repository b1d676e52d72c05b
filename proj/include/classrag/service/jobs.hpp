#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "classrag/llm/types.hpp"

namespace classrag::service {

enum class JobKind { index_vector, index_graph, qagen, judge_run, ksqa_run };
enum class JobState { queued, running, done, failed };

std::string_view to_string(JobKind kind);
std::string_view to_string(JobState state);
std::optional<JobKind> parse_job_kind(std::string_view name);
std::optional<JobState> parse_job_state(std::string_view name);

// queued -> running -> done | failed, plus queued -> failed for jobs that
// never start.
bool valid_transition(JobState from, JobState to);

struct JobRecord {
  std::string job_id;
  JobKind kind = JobKind::index_vector;
  JobState state = JobState::queued;
  double progress = 0.0;
  nlohmann::json params = nlohmann::json::object();
  nlohmann::json result;  // set when done
  std::optional<std::string> error_code;
  std::optional<std::string> error_message;
  std::optional<llm::UsageLedger> usage;  // set on completion

  nlohmann::json to_json() const;
  static JobRecord from_json(const nlohmann::json& j);
};

class JobContext {
 public:
  explicit JobContext(std::function<void(double)> report) : report_(std::move(report)) {}
  // Clamped to [0, 1]; never moves backwards.
  void progress(double fraction) { report_(fraction); }

 private:
  std::function<void(double)> report_;
};

using JobWork = std::function<nlohmann::json(JobContext&)>;
// Returns the ledger at the moment of the call; used to bill each job.
using UsageProbe = std::function<llm::UsageLedger()>;

// In-process job runner. Every state change is appended to a JSON-lines
// journal; on construction the journal is replayed and jobs that were queued
// or running when the previous process stopped are marked failed.
class JobQueue {
 public:
  JobQueue(std::filesystem::path journal, std::size_t workers, UsageProbe usage = {});
  ~JobQueue();
  JobQueue(const JobQueue&) = delete;
  JobQueue& operator=(const JobQueue&) = delete;

  // Throws Conflict after shutdown.
  std::string submit(JobKind kind, nlohmann::json params, JobWork work);
  std::optional<JobRecord> get(const std::string& job_id) const;
  std::vector<JobRecord> list() const;

  // Blocks until the job is done or failed, or the timeout passes.
  std::optional<JobRecord> wait(const std::string& job_id, std::chrono::milliseconds timeout) const;

  // Stops accepting work, fails queued jobs and waits for running ones.
  void shutdown();

 private:
  struct Pending {
    std::string job_id;
    JobWork work;
  };

  void worker_loop();
  void replay();
  // Caller holds mutex_.
  void transition(JobRecord& job, JobState to);
  void append_journal(const JobRecord& job);

  std::filesystem::path journal_;
  UsageProbe usage_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::condition_variable work_ready_;
  std::map<std::string, JobRecord> jobs_;
  std::vector<std::string> order_;
  std::deque<Pending> queue_;
  bool stopping_ = false;
  std::uint64_t next_seq_ = 1;
  std::vector<std::jthread> workers_;
};

}  // namespace classrag::service
