#include "classrag/llm/gateway.hpp"

#include <cmath>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"

namespace classrag::llm {

namespace {

double steady_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace

GatewayOptions deterministic_options() {
  GatewayOptions o;
  o.sleeper = [](std::chrono::milliseconds) {};
  o.clock = [] { return 0.0; };
  return o;
}

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayOptions options)
    : provider_(std::move(provider)), options_(std::move(options)) {
  if (!provider_) throw InvalidArgument("gateway requires a provider");
  if (options_.retry.max_attempts < 1) options_.retry.max_attempts = 1;
  if (options_.embed_batch_size == 0) options_.embed_batch_size = 1;
  if (!options_.sleeper) {
    options_.sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }
  if (!options_.clock) options_.clock = steady_seconds;
}

void Gateway::record(Phase phase, bool embedding, double seconds, std::uint64_t tokens_in,
                     std::uint64_t tokens_out) {
  std::lock_guard lock(mutex_);
  auto& u = ledger_[phase];
  if (embedding) {
    ++u.embedding_calls;
  } else {
    ++u.llm_calls;
  }
  u.wall_seconds += seconds;
  u.tokens_in += tokens_in;
  u.tokens_out += tokens_out;
}

template <class Call>
auto Gateway::with_retries(Phase phase, bool embedding, Call&& call) {
  auto backoff = options_.retry.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    const double start = options_.clock();
    try {
      return call(start);
    } catch (const TransportError& e) {
      record(phase, embedding, std::max(0.0, options_.clock() - start), 0, 0);
      if (attempt >= options_.retry.max_attempts) {
        throw TransportError(fmt::format("{} (after {} attempts)", e.what(), attempt));
      }
      spdlog::warn("transport failure on attempt {}: {}; retrying", attempt, e.what());
      options_.sleeper(backoff);
      backoff = std::chrono::milliseconds(static_cast<std::int64_t>(
          static_cast<double>(backoff.count()) * options_.retry.backoff_multiplier));
    } catch (const ProviderRefusal&) {
      record(phase, embedding, std::max(0.0, options_.clock() - start), 0, 0);
      throw;
    }
  }
}

CompletionResult Gateway::complete(const PromptRequest& request) {
  if (request.messages.empty()) throw InvalidArgument("prompt request has no messages");
  std::size_t prompt_chars = 0;
  for (const auto& m : request.messages) prompt_chars += m.text.size();

  return with_retries(request.phase, false, [&](double start) {
    auto reply = provider_->complete(request);
    const double elapsed = std::max(0.0, options_.clock() - start);
    CompletionResult result;
    result.approx_tokens_in = reply.tokens_in.value_or(approx_tokens(prompt_chars));
    result.approx_tokens_out = reply.tokens_out.value_or(approx_tokens(reply.text.size()));
    result.provider_latency_ms = elapsed * 1000.0;
    result.text = std::move(reply.text);
    record(request.phase, false, elapsed, static_cast<std::uint64_t>(result.approx_tokens_in),
           static_cast<std::uint64_t>(result.approx_tokens_out));
    return result;
  });
}

std::vector<std::vector<double>> Gateway::embed_batch(const std::vector<std::string>& batch,
                                                      Phase phase) {
  return with_retries(phase, true, [&](double start) {
    auto vectors = provider_->embed(batch);
    record(phase, true, std::max(0.0, options_.clock() - start), 0, 0);
    return vectors;
  });
}

std::vector<EmbeddingVector> Gateway::embed(std::span<const std::string> texts, Phase phase) {
  if (texts.empty()) throw InvalidArgument("embed requires at least one text");
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t begin = 0; begin < texts.size(); begin += options_.embed_batch_size) {
    const std::size_t end = std::min(texts.size(), begin + options_.embed_batch_size);
    std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(begin),
                                   texts.begin() + static_cast<std::ptrdiff_t>(end));
    auto vectors = embed_batch(batch, phase);
    if (vectors.size() != batch.size()) {
      throw DimensionMismatch(
          fmt::format("provider returned {} vectors for {} texts", vectors.size(), batch.size()));
    }
    for (auto& v : vectors) {
      if (v.empty()) throw DimensionMismatch("provider returned an empty embedding");
      for (double x : v) {
        if (!std::isfinite(x)) throw DimensionMismatch("provider returned a non-finite embedding");
      }
      {
        std::lock_guard lock(mutex_);
        if (!dimension_) dimension_ = v.size();
        if (*dimension_ != v.size()) {
          throw DimensionMismatch(
              fmt::format("embedding dimension {} differs from {}", v.size(), *dimension_));
        }
      }
      out.push_back(EmbeddingVector{std::move(v)});
    }
  }
  return out;
}

EmbeddingVector Gateway::embed_one(const std::string& text, Phase phase) {
  auto v = embed(std::span<const std::string>(&text, 1), phase);
  return std::move(v.front());
}

UsageLedger Gateway::usage_snapshot() const {
  std::lock_guard lock(mutex_);
  return ledger_;
}

std::optional<std::size_t> Gateway::embedding_dimension() const {
  std::lock_guard lock(mutex_);
  return dimension_;
}

}  // namespace classrag::llm
