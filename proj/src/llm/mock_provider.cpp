#include "classrag/llm/mock_provider.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "classrag/common/error.hpp"
#include "classrag/common/hash.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/synthetic.hpp"

namespace classrag::llm {

MockProvider::MockProvider(MockOptions options) : options_(options) {
  if (options_.embedding_dimension == 0) throw InvalidArgument("mock embedding dimension is 0");
}

void MockProvider::script(std::string user_text, std::string reply) {
  exact_[std::move(user_text)] = std::move(reply);
}

void MockProvider::script_contains(std::string needle, std::string reply) {
  rules_.push_back([needle = std::move(needle), reply = std::move(reply)](
                       const PromptRequest& r) -> std::optional<std::string> {
    if (r.serialize().find(needle) != std::string::npos) return reply;
    return std::nullopt;
  });
}

void MockProvider::add_rule(Rule rule) { rules_.push_back(std::move(rule)); }

void MockProvider::pin_embedding(std::string text, std::vector<double> values) {
  pinned_[std::move(text)] = std::move(values);
}

void MockProvider::fail_next(int count, MockFailure kind) {
  std::lock_guard lock(mutex_);
  pending_failures_ = count;
  pending_kind_ = kind;
}

void MockProvider::fail_always(std::optional<MockFailure> kind) {
  std::lock_guard lock(mutex_);
  always_fail_ = kind;
}

void MockProvider::maybe_fail() {
  std::optional<MockFailure> failure;
  {
    std::lock_guard lock(mutex_);
    if (always_fail_) {
      failure = always_fail_;
    } else if (pending_failures_ > 0) {
      --pending_failures_;
      failure = pending_kind_;
    }
  }
  if (!failure) return;
  if (*failure == MockFailure::transport) throw TransportError("mock transport failure");
  throw ProviderRefusal("mock provider refusal");
}

std::string MockProvider::digest_reply(const PromptRequest& request) {
  return "MOCK:" + sha256_hex(request.serialize()).substr(0, 8);
}

ProviderCompletion MockProvider::complete(const PromptRequest& request) {
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
  }
  maybe_fail();

  if (auto it = exact_.find(std::string(request.user_text())); it != exact_.end()) {
    return {it->second, std::nullopt, std::nullopt};
  }
  for (const auto& rule : rules_) {
    if (auto reply = rule(request)) return {std::move(*reply), std::nullopt, std::nullopt};
  }
  if (options_.synthetic) {
    if (auto reply = synthetic_reply(request)) return {std::move(*reply), std::nullopt, std::nullopt};
  }
  return {digest_reply(request), std::nullopt, std::nullopt};
}

std::vector<double> MockProvider::hashed_embedding(const std::string& text) const {
  const std::size_t dim = options_.embedding_dimension;
  std::vector<double> v(dim, 0.0);
  for (const auto& token : text::word_tokens(text)) {
    const std::uint64_t h = fnv1a64(token);
    v[h % dim] += (h >> 63) ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm == 0.0) {
    // No tokens (or perfectly cancelling ones): expand the text digest.
    const auto digest = sha256(text);
    std::uint64_t state = 0;
    for (int i = 0; i < 8; ++i) state = (state << 8) | digest[static_cast<std::size_t>(i)];
    for (auto& x : v) {
      x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53 * 2.0 - 1.0;
      norm += x * x;
    }
  }
  const double inv = 1.0 / std::sqrt(norm);
  for (auto& x : v) x *= inv;
  return v;
}

std::vector<std::vector<double>> MockProvider::embed(const std::vector<std::string>& texts) {
  maybe_fail();
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    if (auto it = pinned_.find(t); it != pinned_.end()) {
      out.push_back(it->second);
    } else {
      out.push_back(hashed_embedding(t));
    }
  }
  return out;
}

std::vector<PromptRequest> MockProvider::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t MockProvider::completion_count() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::shared_ptr<MockProvider> MockProvider::from_script(const nlohmann::json& script) {
  MockOptions options;
  options.embedding_dimension = script.value("embedding_dimension", options.embedding_dimension);
  options.synthetic = script.value("synthetic", false);
  auto mock = std::make_shared<MockProvider>(options);
  if (script.contains("exact")) {
    for (const auto& [prompt, reply] : script.at("exact").items()) {
      mock->script(prompt, reply.get<std::string>());
    }
  }
  if (script.contains("contains")) {
    for (const auto& rule : script.at("contains")) {
      mock->script_contains(rule.at("needle").get<std::string>(),
                            rule.at("reply").get<std::string>());
    }
  }
  return mock;
}

std::shared_ptr<MockProvider> MockProvider::from_script_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open mock script " + path.string());
  try {
    return from_script(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("mock script " + path.string() + ": " + e.what());
  }
}

}  // namespace classrag::llm
