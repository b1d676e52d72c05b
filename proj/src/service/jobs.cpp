#include "classrag/service/jobs.hpp"

#include <algorithm>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/text.hpp"

namespace classrag::service {

namespace {

constexpr std::array<JobKind, 5> kKinds = {JobKind::index_vector, JobKind::index_graph, JobKind::qagen,
                                           JobKind::judge_run, JobKind::ksqa_run};
constexpr std::array<JobState, 4> kStates = {JobState::queued, JobState::running, JobState::done,
                                             JobState::failed};

bool terminal(JobState s) { return s == JobState::done || s == JobState::failed; }

}  // namespace

std::string_view to_string(JobKind k) {
  switch (k) {
    case JobKind::index_vector: return "index_vector";
    case JobKind::index_graph: return "index_graph";
    case JobKind::qagen: return "qagen";
    case JobKind::judge_run: return "judge_run";
    case JobKind::ksqa_run: return "ksqa_run";
  }
  return "index_vector";
}

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "queued";
}

std::optional<JobKind> parse_job_kind(std::string_view name) {
  for (auto k : kKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<JobState> parse_job_state(std::string_view name) {
  for (auto s : kStates) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

bool valid_transition(JobState from, JobState to) {
  switch (from) {
    case JobState::queued: return to == JobState::running || to == JobState::failed;
    case JobState::running: return to == JobState::done || to == JobState::failed;
    default: return false;
  }
}

nlohmann::json JobRecord::to_json() const {
  nlohmann::json j = {{"job_id", job_id},
                      {"kind", to_string(kind)},
                      {"state", to_string(state)},
                      {"progress", progress},
                      {"params", params}};
  j["result"] = result;
  if (error_code) j["error"] = {{"code", *error_code}, {"message", error_message.value_or("")}};
  if (usage) j["usage"] = usage->to_json();
  return j;
}

JobRecord JobRecord::from_json(const nlohmann::json& j) {
  JobRecord r;
  r.job_id = j.at("job_id").get<std::string>();
  auto kind = parse_job_kind(j.at("kind").get<std::string>());
  auto state = parse_job_state(j.at("state").get<std::string>());
  if (!kind || !state) throw FormatError("bad job record " + j.dump());
  r.kind = *kind;
  r.state = *state;
  r.progress = j.value("progress", 0.0);
  r.params = j.value("params", nlohmann::json::object());
  r.result = j.value("result", nlohmann::json());
  if (j.contains("error")) {
    r.error_code = j.at("error").value("code", "");
    r.error_message = j.at("error").value("message", "");
  }
  if (j.contains("usage")) r.usage = llm::UsageLedger::from_json(j.at("usage"));
  return r;
}

JobQueue::JobQueue(std::filesystem::path journal, std::size_t workers, UsageProbe usage)
    : journal_(std::move(journal)), usage_(std::move(usage)) {
  std::filesystem::create_directories(journal_.parent_path());
  replay();
  const auto n = std::max<std::size_t>(1, workers);
  for (std::size_t i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
}

JobQueue::~JobQueue() { shutdown(); }

void JobQueue::replay() {
  std::ifstream in(journal_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      auto record = JobRecord::from_json(nlohmann::json::parse(line));
      if (!jobs_.contains(record.job_id)) order_.push_back(record.job_id);
      jobs_[record.job_id] = std::move(record);
    } catch (const std::exception& e) {
      // A torn final line from a crash is expected; skip it.
      spdlog::warn("job journal line {} ignored: {}", line_no, e.what());
    }
  }
  // Terminate a torn last line so later appends start on a fresh one.
  in.clear();
  in.seekg(-1, std::ios::end);
  if (in && in.peek() != '\n') {
    in.close();
    std::ofstream(journal_, std::ios::app) << '\n';
  }
  for (const auto& id : order_) {
    std::uint64_t seq = 0;
    if (std::sscanf(id.c_str(), "job-%lu", &seq) == 1) next_seq_ = std::max(next_seq_, seq + 1);
    auto& job = jobs_.at(id);
    if (!terminal(job.state)) {
      job.state = JobState::failed;
      job.error_code = "Interrupted";
      job.error_message = "service stopped before the job finished";
      append_journal(job);
    }
  }
}

void JobQueue::append_journal(const JobRecord& job) {
  std::ofstream out(journal_, std::ios::app);
  out << job.to_json().dump() << '\n';
  out.flush();
}

void JobQueue::transition(JobRecord& job, JobState to) {
  if (!valid_transition(job.state, to)) {
    throw Conflict(fmt::format("job {}: {} -> {} not allowed", job.job_id, to_string(job.state), to_string(to)));
  }
  job.state = to;
  if (to == JobState::done) job.progress = 1.0;
  append_journal(job);
  changed_.notify_all();
}

std::string JobQueue::submit(JobKind kind, nlohmann::json params, JobWork work) {
  std::lock_guard lock(mutex_);
  if (stopping_) throw Conflict("job queue is shutting down");
  JobRecord job;
  job.job_id = fmt::format("job-{:06d}", next_seq_++);
  job.kind = kind;
  job.params = std::move(params);
  jobs_[job.job_id] = job;
  order_.push_back(job.job_id);
  append_journal(job);
  queue_.push_back({job.job_id, std::move(work)});
  work_ready_.notify_one();
  return job.job_id;
}

std::optional<JobRecord> JobQueue::get(const std::string& job_id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::vector<JobRecord> JobQueue::list() const {
  std::lock_guard lock(mutex_);
  std::vector<JobRecord> out;
  for (const auto& id : order_) out.push_back(jobs_.at(id));
  return out;
}

std::optional<JobRecord> JobQueue::wait(const std::string& job_id, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  changed_.wait_for(lock, timeout, [&] { return terminal(jobs_.at(job_id).state); });
  return jobs_.at(job_id);
}

void JobQueue::worker_loop() {
  for (;;) {
    Pending next;
    {
      std::unique_lock lock(mutex_);
      work_ready_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (stopping_) return;
      next = std::move(queue_.front());
      queue_.pop_front();
      transition(jobs_.at(next.job_id), JobState::running);
    }
    const auto before = usage_ ? usage_() : llm::UsageLedger{};
    JobContext context([this, id = next.job_id](double fraction) {
      std::lock_guard lock(mutex_);
      auto& job = jobs_.at(id);
      job.progress = std::clamp(std::max(job.progress, fraction), 0.0, 1.0);
      changed_.notify_all();
    });
    nlohmann::json result;
    std::optional<std::pair<std::string, std::string>> failure;
    try {
      result = next.work(context);
    } catch (const Error& e) {
      failure = {e.code(), e.what()};
    } catch (const std::exception& e) {
      failure = {"InternalError", e.what()};
    }
    std::lock_guard lock(mutex_);
    auto& job = jobs_.at(next.job_id);
    if (usage_) job.usage = usage_().since(before);
    if (failure) {
      job.error_code = failure->first;
      job.error_message = failure->second;
      spdlog::warn("job {} failed: {} ({})", job.job_id, failure->second, failure->first);
      transition(job, JobState::failed);
    } else {
      job.result = std::move(result);
      transition(job, JobState::done);
    }
  }
}

void JobQueue::shutdown() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_ && workers_.empty()) return;
    stopping_ = true;
    for (auto& p : queue_) {
      auto& job = jobs_.at(p.job_id);
      job.error_code = "Shutdown";
      job.error_message = "service stopped before the job started";
      transition(job, JobState::failed);
    }
    queue_.clear();
    work_ready_.notify_all();
  }
  workers_.clear();  // joins; running jobs finish first
}

}  // namespace classrag::service
