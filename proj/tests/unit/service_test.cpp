#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "classrag/common/error.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/mock_provider.hpp"
#include "classrag/service/service.hpp"
#include "support.hpp"

namespace classrag::service {
namespace {

using nlohmann::json;
using testing::TempDir;

std::string first_words_of(const std::filesystem::path& path, std::size_t n) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const auto words = text::split_whitespace(ss.str());
  std::string out;
  for (std::size_t i = 0; i < std::min(n, words.size()); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

json corpus_body() {
  const auto text = first_words_of(std::filesystem::path(CLASSRAG_TEST_DATA) / "mini" / "river-trade.txt", 700);
  return {{"name", "river"},
          {"chunk_size_words", 100},
          {"documents", json::array({{{"doc_id", "river"}, {"subject", "history"}, {"text", text}}})}};
}

class ServiceTest : public ::testing::Test {
 protected:
  void start(std::optional<std::string> token = std::nullopt) {
    ServiceConfig config;
    config.workspace = dir_.path() / "ws";
    config.token = std::move(token);
    config.workers = 2;
    llm::MockOptions options;
    options.synthetic = true;
    mock_ = std::make_shared<llm::MockProvider>(options);
    service_ = std::make_unique<Service>(config, mock_, llm::deterministic_options());
    server_ = std::make_unique<ApiServer>(*service_);
    port_ = server_->bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->listen(); });
  }

  void stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
    if (service_) service_->shutdown();
    server_.reset();
    service_.reset();
  }

  void TearDown() override { stop(); }

  std::unique_ptr<httplib::Client> client() const {
    auto c = std::make_unique<httplib::Client>("127.0.0.1", port_);
    c->set_read_timeout(120, 0);
    if (bearer_) c->set_bearer_token_auth(*bearer_);
    return c;
  }

  httplib::Result post(const std::string& path, const json& body, httplib::Headers headers = {}) const {
    return client()->Post(path, headers, body.dump(), "application/json");
  }

  json get_json(const std::string& path, int expect = 200) const {
    auto r = client()->Get(path);
    EXPECT_TRUE(r) << path;
    if (!r) return {};
    EXPECT_EQ(r->status, expect) << path << " " << r->body;
    return json::parse(r->body);
  }

  json wait_job(const std::string& job_id) const {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(120);
    for (;;) {
      auto job = get_json("/jobs/" + job_id);
      const auto state = job.value("state", "");
      if (state == "done" || state == "failed") return job;
      if (std::chrono::steady_clock::now() > deadline) return job;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  }

  std::string create_corpus() {
    auto r = post("/corpora", corpus_body());
    EXPECT_TRUE(r);
    return json::parse(r->body).at("corpus_id").get<std::string>();
  }

  void build_index(const std::string& corpus_id, const std::string& engine) {
    auto r = post("/corpora/" + corpus_id + "/index", {{"engine", engine}});
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 202) << r->body;
    const auto job = wait_job(json::parse(r->body).at("job_id").get<std::string>());
    ASSERT_EQ(job.at("state"), "done") << job.dump();
  }

  TempDir dir_;
  std::shared_ptr<llm::MockProvider> mock_;
  std::unique_ptr<Service> service_;
  std::unique_ptr<ApiServer> server_;
  std::thread thread_;
  int port_ = 0;
  std::optional<std::string> bearer_;
};

TEST_F(ServiceTest, HealthAndUnknownRoute) {
  start();
  EXPECT_EQ(get_json("/health").at("status"), "ok");
  const auto missing = get_json("/no/such/route", 404);
  EXPECT_EQ(missing.at("code"), "NotFound");
}

TEST_F(ServiceTest, CorpusCreateIsContentAddressed) {
  start();
  auto first = post("/corpora", corpus_body());
  ASSERT_TRUE(first);
  EXPECT_EQ(first->status, 201) << first->body;
  const auto created = json::parse(first->body);
  EXPECT_EQ(created.at("chunk_count"), 7);
  EXPECT_EQ(created.at("total_words"), 700);

  auto again = post("/corpora", corpus_body());
  EXPECT_EQ(again->status, 200);
  EXPECT_EQ(json::parse(again->body).at("corpus_id"), created.at("corpus_id"));

  const auto listed = get_json("/corpora");
  ASSERT_EQ(listed.at("corpora").size(), 1u);
  const auto id = created.at("corpus_id").get<std::string>();
  const auto one = get_json("/corpora/" + id);
  EXPECT_FALSE(one.at("indexes").at("vector").get<bool>());
  EXPECT_FALSE(one.at("indexes").at("graph").get<bool>());
  EXPECT_EQ(get_json("/corpora/c-000000000000", 404).at("code"), "NotFound");
}

TEST_F(ServiceTest, BadBodiesAre400) {
  start();
  auto r = client()->Post("/corpora", "{not json", "application/json");
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body).at("code"), "FormatError");
  r = post("/corpora", {{"name", "x"}});
  EXPECT_EQ(r->status, 400);
  EXPECT_EQ(json::parse(r->body).at("code"), "InvalidArgument");
  const auto id = create_corpus();
  r = post("/corpora/" + id + "/index", {{"engine", "bm25"}});
  EXPECT_EQ(r->status, 400);
  r = post("/query", {{"corpus_id", id}});
  EXPECT_EQ(r->status, 400);
}

TEST_F(ServiceTest, QueryBeforeIndexIsConflict) {
  start();
  const auto id = create_corpus();
  auto r = post("/query", {{"corpus_id", id}, {"question", "Who rebuilt the toll ledgers?"}, {"route", "vector"}});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 409);
  EXPECT_EQ(json::parse(r->body).at("code"), "IndexMissing");
  EXPECT_EQ(mock_->completion_count(), 0u);
}

TEST_F(ServiceTest, IndexThenQuery) {
  start();
  const auto id = create_corpus();
  build_index(id, "vector");
  EXPECT_TRUE(get_json("/corpora/" + id).at("indexes").at("vector").get<bool>());
  EXPECT_EQ(mock_->completion_count(), 0u);  // vector indexing embeds only

  auto r = post("/query", {{"corpus_id", id}, {"question", "Who rebuilt the toll ledgers?"}, {"route", "vector"}});
  ASSERT_EQ(r->status, 200) << r->body;
  const auto q = json::parse(r->body);
  EXPECT_EQ(q.at("engine"), "vector");
  EXPECT_FALSE(q.at("answer").get<std::string>().empty());
  ASSERT_FALSE(q.at("sources").empty());
  EXPECT_FALSE(q.at("sources")[0].at("excerpt").get<std::string>().empty());
  EXPECT_FALSE(q.at("context_chunk_ids").empty());
  EXPECT_EQ(q.at("llm_calls"), 1);
  EXPECT_TRUE(q.contains("decision"));

  const auto qid = q.at("query_id").get<std::string>();
  EXPECT_EQ(get_json("/queries/" + qid).at("answer"), q.at("answer"));
  EXPECT_EQ(get_json("/queries?corpus_id=" + id).at("queries").size(), 1u);
  EXPECT_EQ(get_json("/queries?corpus_id=c-ffffffffffff").at("queries").size(), 0u);

  build_index(id, "graph");
  r = post("/query", {{"corpus_id", id}, {"question", "What themes run through the river trade?"}});
  ASSERT_EQ(r->status, 200) << r->body;
  const auto routed = json::parse(r->body);
  EXPECT_TRUE(routed.at("decision").is_object());
  EXPECT_GE(routed.at("llm_calls").get<int>(), 2);  // router plus engine

  const auto usage = get_json("/usage");
  EXPECT_EQ(usage.at("llm_calls").get<std::size_t>(), mock_->completion_count());
  EXPECT_GT(usage.at("embedding_calls").get<int>(), 0);
}

TEST_F(ServiceTest, IdempotencyKeyReplaysAndGuards) {
  start();
  const auto id = create_corpus();
  build_index(id, "vector");
  const json body = {{"corpus_id", id}, {"question", "Who taxed the salt weights?"}, {"route", "vector"}};
  auto first = post("/query", body, {{"Idempotency-Key", "k-1"}});
  ASSERT_EQ(first->status, 200) << first->body;
  const auto calls = mock_->completion_count();

  auto replay = post("/query", body, {{"Idempotency-Key", "k-1"}});
  ASSERT_EQ(replay->status, 200);
  EXPECT_EQ(replay->get_header_value("Idempotent-Replayed"), "true");
  EXPECT_EQ(json::parse(replay->body).at("query_id"), json::parse(first->body).at("query_id"));
  EXPECT_EQ(mock_->completion_count(), calls);

  auto other = post("/query", {{"corpus_id", id}, {"question", "Something else?"}, {"route", "vector"}},
                    {{"Idempotency-Key", "k-1"}});
  EXPECT_EQ(other->status, 409);
  EXPECT_EQ(json::parse(other->body).at("code"), "Conflict");

  // Errors are not stored: the same key may be retried after a failure.
  auto bad = post("/query", {{"corpus_id", id}}, {{"Idempotency-Key", "k-2"}});
  EXPECT_EQ(bad->status, 400);
  auto good = post("/query", body, {{"Idempotency-Key", "k-2"}});
  EXPECT_EQ(good->status, 200) << good->body;
}

TEST_F(ServiceTest, BearerTokenRequired) {
  start("s3cret");
  EXPECT_EQ(get_json("/health").at("status"), "ok");
  auto r = client()->Get("/corpora");
  EXPECT_EQ(r->status, 401);
  EXPECT_EQ(json::parse(r->body).at("code"), "Unauthorized");
  bearer_ = "wrong";
  EXPECT_EQ(client()->Get("/corpora")->status, 401);
  bearer_ = "s3cret";
  EXPECT_EQ(client()->Get("/corpora")->status, 200);
}

TEST_F(ServiceTest, GenerateJudgeAndKnowledgeShiftRuns) {
  start();
  const auto id = create_corpus();
  build_index(id, "vector");
  build_index(id, "graph");

  auto r = post("/datasets/generate",
                {{"corpus_id", id}, {"quotas", {{"specific", 2}, {"sectional", 1}, {"thematic", 1}}}, {"seed", 3}});
  ASSERT_EQ(r->status, 202) << r->body;
  auto job = wait_job(json::parse(r->body).at("job_id"));
  ASSERT_EQ(job.at("state"), "done") << job.dump();
  EXPECT_TRUE(job.contains("usage"));
  const auto dataset_id = job.at("result").at("dataset_id").get<std::string>();
  EXPECT_EQ(get_json("/datasets").at("datasets").size(), 1u);
  const auto ds = get_json("/datasets/" + dataset_id);
  const auto& counts = job.at("result").at("counts");
  EXPECT_EQ(ds.at("pairs").size(),
            counts.at("specific").get<std::size_t>() + counts.at("sectional").get<std::size_t>() +
                counts.at("thematic").get<std::size_t>());
  ASSERT_GT(ds.at("pairs").size(), 0u);

  r = post("/evals/judge", {{"corpus_id", id},
                            {"dataset_id", dataset_id},
                            {"systems", {"vector", "graph_local"}},
                            {"criteria", "directness,faithfulness"}});
  ASSERT_EQ(r->status, 202) << r->body;
  job = wait_job(json::parse(r->body).at("job_id"));
  ASSERT_EQ(job.at("state"), "done") << job.dump();
  const auto judge_run = job.at("result").at("run_id").get<std::string>();
  EXPECT_EQ(job.at("result").at("comparisons").get<std::size_t>(), ds.at("pairs").size() * 2);
  const auto report = get_json("/reports/" + judge_run);
  EXPECT_EQ(report.at("kind"), "judge");
  auto csv = client()->Get("/reports/" + judge_run + "?format=csv");
  ASSERT_EQ(csv->status, 200);
  EXPECT_EQ(csv->body.rfind("criterion,subject,question_type,system,opponent,wins,ties,n,win_rate", 0), 0u);
  auto txt = client()->Get("/reports/" + judge_run + "?format=text");
  ASSERT_EQ(txt->status, 200);
  EXPECT_NE(txt->body.find("directness"), std::string::npos);
  EXPECT_EQ(client()->Get("/reports/" + judge_run + "?format=xml")->status, 400);

  const json item = {{"item_id", "k1"},
                     {"subject", "history"},
                     {"question", "Who rebuilt several toll ledgers in 1407?"},
                     {"options", {"the Brannock family", "the Roman Senate"}},
                     {"correct_index", 0},
                     {"real_world_index", 1},
                     {"doc_id", "river"},
                     {"anchor_chunk", 0}};
  r = post("/evals/ksqa", {{"corpus_id", id}, {"items", {item}}, {"scopes", {"short", "full"}},
                           {"systems", {"vector", "no_retrieval"}}});
  ASSERT_EQ(r->status, 202) << r->body;
  job = wait_job(json::parse(r->body).at("job_id"));
  ASSERT_EQ(job.at("state"), "done") << job.dump();
  const auto ksqa_run = job.at("result").at("run_id").get<std::string>();
  csv = client()->Get("/reports/" + ksqa_run + "?format=csv");
  ASSERT_EQ(csv->status, 200);
  EXPECT_EQ(csv->body.rfind("subject,scope,system,n,correct,accuracy", 0), 0u);
  EXPECT_NE(csv->body.find("history,short,no_retrieval,1,0,"), std::string::npos) << csv->body;

  EXPECT_EQ(get_json("/reports").at("reports").size(), 2u);
  EXPECT_EQ(get_json("/reports/run-000000000000", 404).at("code"), "NotFound");
}

TEST_F(ServiceTest, FailedJobCarriesErrorCode) {
  start();
  auto r = post("/corpora/c-000000000000/index", {{"engine", "vector"}});
  if (r->status == 202) {
    const auto job = wait_job(json::parse(r->body).at("job_id"));
    EXPECT_EQ(job.at("state"), "failed");
    EXPECT_EQ(job.at("error").at("code"), "NotFound");
  } else {
    EXPECT_EQ(r->status, 404);
  }
  EXPECT_EQ(get_json("/jobs/job-999999", 404).at("code"), "NotFound");
}

TEST_F(ServiceTest, StateSurvivesRestart) {
  start();
  const auto id = create_corpus();
  build_index(id, "vector");
  stop();
  start();
  EXPECT_EQ(get_json("/corpora").at("corpora").size(), 1u);
  EXPECT_TRUE(get_json("/corpora/" + id).at("indexes").at("vector").get<bool>());
  const auto jobs = get_json("/jobs").at("jobs");
  ASSERT_EQ(jobs.size(), 1u);
  EXPECT_EQ(jobs[0].at("state"), "done");
  auto r = post("/query", {{"corpus_id", id}, {"question", "Who inspected the dock warrants?"}, {"route", "vector"}});
  EXPECT_EQ(r->status, 200) << r->body;
}

TEST(JobQueueTest, TransitionsOnlyMoveForward) {
  const std::array states = {JobState::queued, JobState::running, JobState::done, JobState::failed};
  auto rank = [](JobState s) { return s == JobState::queued ? 0 : s == JobState::running ? 1 : 2; };
  for (auto from : states) {
    for (auto to : states) {
      const bool expected = rank(to) > rank(from) && !(from == JobState::queued && to == JobState::done);
      EXPECT_EQ(valid_transition(from, to), expected) << to_string(from) << "->" << to_string(to);
    }
  }
}

TEST(JobQueueTest, ReplayFailsInterruptedJobs) {
  TempDir dir;
  const auto journal = dir.path() / "jobs" / "journal.jsonl";
  std::filesystem::create_directories(journal.parent_path());
  {
    std::ofstream out(journal);
    JobRecord done{.job_id = "job-000001", .kind = JobKind::qagen, .state = JobState::done};
    JobRecord running{.job_id = "job-000003", .kind = JobKind::index_graph, .state = JobState::running};
    out << done.to_json().dump() << "\n" << running.to_json().dump() << "\n{\"job_id\": \"job-0000";
  }
  JobQueue queue(journal, 1);
  EXPECT_EQ(queue.get("job-000001")->state, JobState::done);
  const auto interrupted = queue.get("job-000003");
  ASSERT_TRUE(interrupted);
  EXPECT_EQ(interrupted->state, JobState::failed);
  EXPECT_EQ(interrupted->error_code, "Interrupted");

  const auto next = queue.submit(JobKind::qagen, {}, [](JobContext& ctx) {
    ctx.progress(0.5);
    return json{{"ok", true}};
  });
  EXPECT_EQ(next, "job-000004");
  const auto finished = queue.wait(next, std::chrono::seconds(10));
  EXPECT_EQ(finished->state, JobState::done);
  EXPECT_EQ(finished->progress, 1.0);

  const auto failing = queue.submit(JobKind::qagen, {}, [](JobContext&) -> json { throw NoGraph("no graph"); });
  const auto failed = queue.wait(failing, std::chrono::seconds(10));
  EXPECT_EQ(failed->state, JobState::failed);
  EXPECT_EQ(failed->error_code, "NoGraph");
  queue.shutdown();
  JobQueue reopened(journal, 1);
  EXPECT_EQ(reopened.get(next)->state, JobState::done);
  EXPECT_EQ(reopened.get("job-000003")->error_code, "Interrupted");
  EXPECT_THROW(queue.submit(JobKind::qagen, {}, [](JobContext&) { return json{}; }), Conflict);
}

TEST(ServiceConfigTest, ParsesAndValidates) {
  const auto c = ServiceConfig::from_json({{"workspace", "ws"}, {"port", 9000}, {"token", "t"}}, "/srv/app");
  EXPECT_EQ(c.workspace, std::filesystem::path("/srv/app/ws"));
  EXPECT_EQ(c.port, 9000);
  EXPECT_EQ(c.token, "t");
  EXPECT_EQ(c.provider, "mock");
  EXPECT_THROW(ServiceConfig::from_json({{"provider", "carrier-pigeon"}}), FormatError);
  EXPECT_THROW(ServiceConfig::from_json({{"port", "eighty"}}), FormatError);
  EXPECT_THROW(ServiceConfig::load("/definitely/not/here.json"), Error);
}

TEST(ServiceConfigTest, StatusMapping) {
  EXPECT_EQ(http_status("NotFound"), 404);
  EXPECT_EQ(http_status("IndexMissing"), 409);
  EXPECT_EQ(http_status("Conflict"), 409);
  EXPECT_EQ(http_status("Unauthorized"), 401);
  EXPECT_EQ(http_status("InvalidArgument"), 400);
  EXPECT_EQ(http_status("InvalidK"), 400);
  EXPECT_EQ(http_status("NoEvidence"), 422);
  EXPECT_EQ(http_status("TransportError"), 502);
  EXPECT_EQ(http_status("Whatever"), 500);
}

TEST(WorkspaceTest, RunsAndIds) {
  TempDir dir;
  Workspace ws(dir.path());
  const auto id = new_id("run");
  EXPECT_TRUE(valid_id(id));
  EXPECT_FALSE(valid_id("../etc"));
  EXPECT_FALSE(valid_id(""));
  ws.save_run(id, {{"kind", "judge"}}, {{"report.txt", "table\n"}});
  EXPECT_EQ(ws.load_run(id).at("kind"), "judge");
  EXPECT_EQ(ws.load_run_file(id, "report.txt"), "table\n");
  EXPECT_EQ(ws.list_runs(), std::vector<std::string>{id});
  EXPECT_THROW(ws.load_run("run-000000000000"), NotFound);
  EXPECT_THROW(ws.corpus("c-000000000000"), NotFound);
}

}  // namespace
}  // namespace classrag::service
