#include <httplib.h>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/hash.hpp"
#include "classrag/service/service.hpp"

namespace classrag::service {

namespace {

struct Reply {
  int status = 200;
  nlohmann::json body;
};

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::string& code, const std::string& message) {
  send_json(res, http_status(code), {{"code", code}, {"message", message}});
}

// Runs `fn`, turning toolkit errors into {code, message} bodies.
template <class Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, e.code(), e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, "InvalidArgument", e.what());
  } catch (const std::exception& e) {
    spdlog::error("request failed: {}", e.what());
    send_error(res, "InternalError", e.what());
  }
}

nlohmann::json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("request body is not JSON: {}", e.what()));
  }
}

std::optional<std::string> query_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) return std::nullopt;
  return req.get_param_value(name);
}

}  // namespace

ApiServer::ApiServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound <= 0) throw Error("BindError", fmt::format("cannot bind {}", host));
    return bound;
  }
  if (!server_->bind_to_port(host, port)) throw Error("BindError", fmt::format("cannot bind {}:{}", host, port));
  return port;
}

void ApiServer::listen() { server_->listen_after_bind(); }

void ApiServer::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void ApiServer::install_routes() {
  auto& s = *server_;
  Service& svc = service_;

  s.set_pre_routing_handler([&svc](const httplib::Request& req, httplib::Response& res) {
    const auto& token = svc.config().token;
    if (!token || req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + *token) {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    send_error(res, "Unauthorized", "missing or wrong bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });
  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) send_error(res, "NotFound", "no route for " + req.path);
  });

  // POST routes share idempotency handling: a stored 2xx reply is replayed
  // for a repeated key; errors are not stored so the client may retry.
  auto post = [this](const std::string& pattern, std::function<Reply(const httplib::Request&)> fn) {
    server_->Post(pattern, [this, fn](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto key = req.get_header_value("Idempotency-Key");
        if (key.empty()) {
          const auto r = fn(req);
          send_json(res, r.status, r.body);
          return;
        }
        std::shared_ptr<std::mutex> key_mutex;
        {
          std::lock_guard lock(idempotency_mutex_);
          auto& slot = in_flight_[key];
          if (!slot) slot = std::make_shared<std::mutex>();
          key_mutex = slot;
        }
        std::lock_guard key_lock(*key_mutex);
        const auto path = service_.workspace().idempotency_dir() / (sha256_hex(key).substr(0, 32) + ".json");
        const auto request_hash = sha256_hex(req.method + "\n" + req.path + "\n" + req.body);
        if (std::filesystem::exists(path)) {
          const auto stored = nlohmann::json::parse(read_file(path));
          if (stored.at("request").get<std::string>() != request_hash) {
            throw Conflict("Idempotency-Key was already used for a different request");
          }
          res.set_header("Idempotent-Replayed", "true");
          send_json(res, stored.at("status").get<int>(), stored.at("body"));
          return;
        }
        const auto r = fn(req);
        if (r.status >= 200 && r.status < 300) {
          write_file_atomic(path, nlohmann::json{{"request", request_hash}, {"status", r.status}, {"body", r.body}}.dump());
        }
        send_json(res, r.status, r.body);
      });
    });
  };
  auto get = [this](const std::string& pattern, std::function<nlohmann::json(const httplib::Request&)> fn) {
    server_->Get(pattern, [fn](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, fn(req)); });
    });
  };

  get("/health", [](const httplib::Request&) { return nlohmann::json{{"status", "ok"}}; });

  post("/corpora", [&svc](const httplib::Request& req) {
    bool created = false;
    auto body = svc.create_corpus(parse_body(req), created);
    return Reply{created ? 201 : 200, std::move(body)};
  });
  get("/corpora", [&svc](const httplib::Request&) { return svc.list_corpora(); });
  get(R"(/corpora/([^/]+))", [&svc](const httplib::Request& req) { return svc.get_corpus(req.matches[1]); });
  post(R"(/corpora/([^/]+)/index)", [&svc](const httplib::Request& req) {
    return Reply{202, svc.start_index(req.matches[1], parse_body(req))};
  });

  get("/jobs", [&svc](const httplib::Request&) { return svc.list_jobs(); });
  get(R"(/jobs/([^/]+))", [&svc](const httplib::Request& req) { return svc.get_job(req.matches[1]); });

  post("/query", [&svc](const httplib::Request& req) { return Reply{200, svc.query(parse_body(req))}; });
  get("/queries", [&svc](const httplib::Request& req) { return svc.list_queries(query_param(req, "corpus_id")); });
  get(R"(/queries/([^/]+))", [&svc](const httplib::Request& req) { return svc.get_query(req.matches[1]); });

  post("/datasets/generate",
       [&svc](const httplib::Request& req) { return Reply{202, svc.start_generate(parse_body(req))}; });
  get("/datasets", [&svc](const httplib::Request&) { return svc.list_datasets(); });
  get(R"(/datasets/([^/]+))", [&svc](const httplib::Request& req) { return svc.get_dataset(req.matches[1]); });

  post("/evals/judge", [&svc](const httplib::Request& req) { return Reply{202, svc.start_judge(parse_body(req))}; });
  post("/evals/ksqa", [&svc](const httplib::Request& req) { return Reply{202, svc.start_ksqa(parse_body(req))}; });

  get("/reports", [&svc](const httplib::Request&) { return svc.list_reports(); });
  server_->Get(R"(/reports/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto format = query_param(req, "format").value_or("json");
      if (format == "json") {
        send_json(res, 200, svc.report(req.matches[1]));
      } else {
        res.status = 200;
        res.set_content(svc.report_file(req.matches[1], format), format == "csv" ? "text/csv" : "text/plain");
      }
    });
  });

  get("/usage", [&svc](const httplib::Request&) { return svc.usage(); });
}

}  // namespace classrag::service
