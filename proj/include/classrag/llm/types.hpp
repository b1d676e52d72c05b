#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace classrag::llm {

enum class Role { system, user };

struct Message {
  Role role = Role::user;
  std::string text;
};

// Which model a request goes to. Generation work uses the mid-size model,
// judging and routing the cheapest one.
enum class ModelTier { generator, judge, router };

// Ledger bucket a round-trip is billed to.
enum class Phase { indexing, querying, generation, judging };
inline constexpr std::size_t kPhaseCount = 4;
inline constexpr std::array<Phase, kPhaseCount> kAllPhases = {
    Phase::indexing, Phase::querying, Phase::generation, Phase::judging};

std::string_view to_string(ModelTier tier);
std::string_view to_string(Phase phase);
std::string_view to_string(Role role);
std::optional<Phase> parse_phase(std::string_view s);

struct PromptRequest {
  std::vector<Message> messages;
  ModelTier tier = ModelTier::generator;
  int max_output_tokens = 1024;
  double temperature = 0.0;
  Phase phase = Phase::querying;
  // Short machine tag naming the prompt family ("extract", "judge", ...).
  // Not sent to remote providers; offline providers may dispatch on it.
  std::string task;

  // Convenience constructor for the common system + user shape.
  static PromptRequest make(ModelTier tier, Phase phase, std::string task,
                            std::string system, std::string user);

  // Text of the last user message, or empty.
  std::string_view user_text() const;
  std::string_view system_text() const;
  // Role-tagged serialization; the input to content digests.
  std::string serialize() const;
};

struct CompletionResult {
  std::string text;
  double provider_latency_ms = 0.0;
  std::int64_t approx_tokens_in = 0;
  std::int64_t approx_tokens_out = 0;
};

struct EmbeddingVector {
  std::vector<double> values;
  std::size_t dimension() const { return values.size(); }
  double norm() const;
  bool operator==(const EmbeddingVector&) const = default;
};

// Cosine similarity; 0 when either vector has zero norm.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct PhaseUsage {
  std::uint64_t llm_calls = 0;
  std::uint64_t embedding_calls = 0;
  double wall_seconds = 0.0;
  std::uint64_t tokens_in = 0;
  std::uint64_t tokens_out = 0;
  bool operator==(const PhaseUsage&) const = default;
};

struct UsageLedger {
  std::array<PhaseUsage, kPhaseCount> phases{};

  const PhaseUsage& operator[](Phase p) const { return phases[static_cast<std::size_t>(p)]; }
  PhaseUsage& operator[](Phase p) { return phases[static_cast<std::size_t>(p)]; }

  std::uint64_t total_llm_calls() const;
  std::uint64_t total_embedding_calls() const;

  // Component-wise difference (this - before). Used for per-query deltas.
  UsageLedger since(const UsageLedger& before) const;
  UsageLedger& operator+=(const UsageLedger& other);

  // One line per phase: "phase=<p> time_s=<t> llm_calls=<n> embedding_calls=<m>".
  std::string to_report() const;
  nlohmann::json to_json() const;
  static UsageLedger from_json(const nlohmann::json& j);

  bool operator==(const UsageLedger&) const = default;
};

}  // namespace classrag::llm
