#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "classrag/llm/types.hpp"

namespace classrag::llm {

struct ProviderCompletion {
  std::string text;
  std::optional<std::int64_t> tokens_in;
  std::optional<std::int64_t> tokens_out;
};

// A completion/embedding backend. Implementations throw TransportError for
// retryable failures and ProviderRefusal for non-retryable ones. Must be safe
// to call from several threads at once.
class Provider {
 public:
  virtual ~Provider() = default;

  virtual ProviderCompletion complete(const PromptRequest& request) = 0;
  // One provider batch: returns one vector per input text.
  virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
  virtual std::string name() const = 0;
};

}  // namespace classrag::llm
