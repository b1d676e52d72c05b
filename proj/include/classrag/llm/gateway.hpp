#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "classrag/llm/provider.hpp"
#include "classrag/llm/types.hpp"

namespace classrag::llm {

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double backoff_multiplier = 2.0;
};

struct GatewayOptions {
  RetryPolicy retry;
  std::size_t embed_batch_size = 64;
  // Injected so tests and offline runs do not actually sleep.
  std::function<void(std::chrono::milliseconds)> sleeper;
  // Monotonic seconds; a fixed clock makes ledger timings reproducible.
  std::function<double()> clock;
};

// The only path from the toolkit to a model. Every provider round-trip,
// including retried attempts, is billed to exactly one ledger phase.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Provider> provider, GatewayOptions options = {});

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  CompletionResult complete(const PromptRequest& request);

  // Batches texts by `embed_batch_size`; each batch is one embedding call.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts,
                                     Phase phase = Phase::indexing);
  EmbeddingVector embed_one(const std::string& text, Phase phase);

  UsageLedger usage_snapshot() const;
  std::optional<std::size_t> embedding_dimension() const;
  const Provider& provider() const { return *provider_; }

  static std::int64_t approx_tokens(std::size_t chars) {
    return static_cast<std::int64_t>((chars + 3) / 4);
  }

 private:
  std::vector<std::vector<double>> embed_batch(const std::vector<std::string>& batch,
                                               Phase phase);
  void record(Phase phase, bool embedding, double seconds, std::uint64_t tokens_in,
              std::uint64_t tokens_out);
  template <class Call>
  auto with_retries(Phase phase, bool embedding, Call&& call);

  std::shared_ptr<Provider> provider_;
  GatewayOptions options_;
  mutable std::mutex mutex_;
  UsageLedger ledger_;
  std::optional<std::size_t> dimension_;
};

// Gateway options whose clock is fixed at zero and whose sleeper is a no-op:
// the configuration used for offline, byte-reproducible runs.
GatewayOptions deterministic_options();

}  // namespace classrag::llm
