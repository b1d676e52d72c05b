#include "classrag/llm/http_provider.hpp"

#include <cstdlib>
#include <regex>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "httplib.h"

#include "classrag/common/error.hpp"

namespace classrag::llm {

namespace {

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return (v && *v) ? std::string(v) : fallback;
}

bool retryable_status(int status) {
  return status == 408 || status == 409 || status == 425 || status == 429 || status >= 500;
}

}  // namespace

HttpProviderConfig HttpProviderConfig::from_env() {
  HttpProviderConfig c;
  c.base_url = env_or("CLASSRAG_BASE_URL", c.base_url);
  c.api_key = env_or("CLASSRAG_API_KEY", c.api_key);
  c.models[ModelTier::generator] = env_or("CLASSRAG_MODEL_GENERATOR", c.models[ModelTier::generator]);
  c.models[ModelTier::judge] = env_or("CLASSRAG_MODEL_JUDGE", c.models[ModelTier::judge]);
  c.models[ModelTier::router] = env_or("CLASSRAG_MODEL_ROUTER", c.models[ModelTier::router]);
  c.embedding_model = env_or("CLASSRAG_MODEL_EMBEDDING", c.embedding_model);
  return c;
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, kUrl)) {
    throw InvalidArgument("invalid provider base URL: " + config_.base_url);
  }
  origin_ = m[1].str();
  path_prefix_ = m[2].matched ? m[2].str() : std::string{};
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

HttpProvider::~HttpProvider() = default;

std::string HttpProvider::post(const std::string& path, const std::string& body) {
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout_seconds, 0);
  client.set_read_timeout(config_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + config_.api_key);
  }
  auto res = client.Post(path_prefix_ + path, headers, body, "application/json");
  if (!res) {
    throw TransportError(fmt::format("POST {}{}: {}", origin_, path,
                                     httplib::to_string(res.error())));
  }
  if (res->status == 200) return res->body;
  const auto message = fmt::format("POST {} returned HTTP {}: {}", path, res->status,
                                   res->body.substr(0, 300));
  if (retryable_status(res->status)) throw TransportError(message);
  throw ProviderRefusal(message);
}

ProviderCompletion HttpProvider::complete(const PromptRequest& request) {
  nlohmann::json body;
  body["model"] = config_.models.at(request.tier);
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;
  body["messages"] = nlohmann::json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.text}});
  }
  const auto raw = post("/chat/completions", body.dump());
  try {
    const auto j = nlohmann::json::parse(raw);
    ProviderCompletion out;
    const auto& choice = j.at("choices").at(0);
    if (choice.contains("finish_reason") && choice["finish_reason"] == "content_filter") {
      throw ProviderRefusal("completion blocked by provider content filter");
    }
    const auto& content = choice.at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string{};
    if (j.contains("usage") && j["usage"].is_object()) {
      const auto& u = j["usage"];
      if (u.contains("prompt_tokens")) out.tokens_in = u["prompt_tokens"].get<std::int64_t>();
      if (u.contains("completion_tokens")) {
        out.tokens_out = u["completion_tokens"].get<std::int64_t>();
      }
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed completion response: ") + e.what());
  }
}

std::vector<std::vector<double>> HttpProvider::embed(const std::vector<std::string>& texts) {
  nlohmann::json body{{"model", config_.embedding_model}, {"input", texts}};
  const auto raw = post("/embeddings", body.dump());
  try {
    const auto j = nlohmann::json::parse(raw);
    std::vector<std::vector<double>> out(texts.size());
    std::size_t seen = 0;
    for (const auto& item : j.at("data")) {
      const auto index = item.value("index", seen);
      if (index >= out.size()) throw DimensionMismatch("embedding index out of range");
      out[index] = item.at("embedding").get<std::vector<double>>();
      ++seen;
    }
    if (seen != texts.size()) {
      throw DimensionMismatch(fmt::format("{} embeddings for {} inputs", seen, texts.size()));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed embedding response: ") + e.what());
  }
}

}  // namespace classrag::llm
