#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/llm/provider.hpp"

namespace classrag::llm {

enum class MockFailure { transport, refusal };

struct MockOptions {
  std::size_t embedding_dimension = 256;
  // Answer toolkit prompts with the offline synthetic responder before
  // falling back to the digest reply.
  bool synthetic = false;
};

// Deterministic offline provider.
//
// Completion lookup order: injected failures, exact script (keyed on the last
// user message), rules in registration order, the synthetic responder when
// enabled, and finally "MOCK:<first 8 hex of sha256(prompt)>".
//
// Embeddings are pinned vectors when registered, otherwise a signed
// feature-hash of the text's word tokens normalized to unit length, so equal
// texts embed identically and lexically similar texts score higher.
//
// Configure before sharing across threads; lookups are read-only afterwards.
class MockProvider final : public Provider {
 public:
  using Rule = std::function<std::optional<std::string>(const PromptRequest&)>;

  explicit MockProvider(MockOptions options = {});

  void script(std::string user_text, std::string reply);
  // Reply whenever the serialized prompt contains `needle`.
  void script_contains(std::string needle, std::string reply);
  void add_rule(Rule rule);
  void pin_embedding(std::string text, std::vector<double> values);

  // The next `count` completion or embedding calls fail.
  void fail_next(int count, MockFailure kind = MockFailure::transport);
  // Every call fails until cleared.
  void fail_always(std::optional<MockFailure> kind);

  ProviderCompletion complete(const PromptRequest& request) override;
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
  std::string name() const override { return "mock"; }

  std::vector<PromptRequest> requests() const;
  std::size_t completion_count() const;

  std::vector<double> hashed_embedding(const std::string& text) const;
  static std::string digest_reply(const PromptRequest& request);

  // {"exact": {user_text: reply}, "contains": [{"needle": .., "reply": ..}],
  //  "embedding_dimension": n, "synthetic": bool}
  static std::shared_ptr<MockProvider> from_script(const nlohmann::json& script);
  static std::shared_ptr<MockProvider> from_script_file(const std::filesystem::path& path);

 private:
  void maybe_fail();

  MockOptions options_;
  std::map<std::string, std::string> exact_;
  std::vector<Rule> rules_;
  std::map<std::string, std::vector<double>> pinned_;

  mutable std::mutex mutex_;
  int pending_failures_ = 0;
  MockFailure pending_kind_ = MockFailure::transport;
  std::optional<MockFailure> always_fail_;
  std::vector<PromptRequest> requests_;
};

}  // namespace classrag::llm
