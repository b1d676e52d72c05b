#include "classrag/llm/types.hpp"

#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "classrag/common/error.hpp"

namespace classrag::llm {

std::string_view to_string(ModelTier tier) {
  switch (tier) {
    case ModelTier::generator: return "generator";
    case ModelTier::judge: return "judge";
    case ModelTier::router: return "router";
  }
  return "generator";
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::indexing: return "indexing";
    case Phase::querying: return "querying";
    case Phase::generation: return "generation";
    case Phase::judging: return "judging";
  }
  return "querying";
}

std::string_view to_string(Role role) { return role == Role::system ? "system" : "user"; }

std::optional<Phase> parse_phase(std::string_view s) {
  for (auto p : kAllPhases) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

PromptRequest PromptRequest::make(ModelTier tier, Phase phase, std::string task,
                                  std::string system, std::string user) {
  PromptRequest r;
  r.tier = tier;
  r.phase = phase;
  r.task = std::move(task);
  if (!system.empty()) r.messages.push_back({Role::system, std::move(system)});
  r.messages.push_back({Role::user, std::move(user)});
  return r;
}

std::string_view PromptRequest::user_text() const {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::user) return it->text;
  }
  return {};
}

std::string_view PromptRequest::system_text() const {
  for (const auto& m : messages) {
    if (m.role == Role::system) return m.text;
  }
  return {};
}

std::string PromptRequest::serialize() const {
  std::string out;
  for (const auto& m : messages) {
    out.append(to_string(m.role));
    out.push_back('\x1f');
    out.append(m.text);
    out.push_back('\x1e');
  }
  return out;
}

double EmbeddingVector::norm() const {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw DimensionMismatch(fmt::format("cosine over dimensions {} and {}", a.dimension(),
                                        b.dimension()));
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
  const double denom = a.norm() * b.norm();
  return denom > 0.0 ? dot / denom : 0.0;
}

std::uint64_t UsageLedger::total_llm_calls() const {
  std::uint64_t n = 0;
  for (const auto& p : phases) n += p.llm_calls;
  return n;
}

std::uint64_t UsageLedger::total_embedding_calls() const {
  std::uint64_t n = 0;
  for (const auto& p : phases) n += p.embedding_calls;
  return n;
}

UsageLedger UsageLedger::since(const UsageLedger& before) const {
  UsageLedger d;
  for (std::size_t i = 0; i < kPhaseCount; ++i) {
    d.phases[i].llm_calls = phases[i].llm_calls - before.phases[i].llm_calls;
    d.phases[i].embedding_calls = phases[i].embedding_calls - before.phases[i].embedding_calls;
    d.phases[i].wall_seconds = phases[i].wall_seconds - before.phases[i].wall_seconds;
    d.phases[i].tokens_in = phases[i].tokens_in - before.phases[i].tokens_in;
    d.phases[i].tokens_out = phases[i].tokens_out - before.phases[i].tokens_out;
  }
  return d;
}

UsageLedger& UsageLedger::operator+=(const UsageLedger& other) {
  for (std::size_t i = 0; i < kPhaseCount; ++i) {
    phases[i].llm_calls += other.phases[i].llm_calls;
    phases[i].embedding_calls += other.phases[i].embedding_calls;
    phases[i].wall_seconds += other.phases[i].wall_seconds;
    phases[i].tokens_in += other.phases[i].tokens_in;
    phases[i].tokens_out += other.phases[i].tokens_out;
  }
  return *this;
}

std::string UsageLedger::to_report() const {
  std::string out;
  for (auto p : kAllPhases) {
    const auto& u = (*this)[p];
    out += fmt::format("phase={} time_s={:.3f} llm_calls={} embedding_calls={}\n", to_string(p),
                       u.wall_seconds, u.llm_calls, u.embedding_calls);
  }
  return out;
}

nlohmann::json UsageLedger::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (auto p : kAllPhases) {
    const auto& u = (*this)[p];
    j[std::string(to_string(p))] = {{"llm_calls", u.llm_calls},
                                    {"embedding_calls", u.embedding_calls},
                                    {"wall_seconds", u.wall_seconds},
                                    {"tokens_in", u.tokens_in},
                                    {"tokens_out", u.tokens_out}};
  }
  return j;
}

UsageLedger UsageLedger::from_json(const nlohmann::json& j) {
  UsageLedger l;
  for (auto p : kAllPhases) {
    const auto key = std::string(to_string(p));
    if (!j.contains(key)) continue;
    const auto& e = j.at(key);
    auto& u = l[p];
    u.llm_calls = e.value("llm_calls", std::uint64_t{0});
    u.embedding_calls = e.value("embedding_calls", std::uint64_t{0});
    u.wall_seconds = e.value("wall_seconds", 0.0);
    u.tokens_in = e.value("tokens_in", std::uint64_t{0});
    u.tokens_out = e.value("tokens_out", std::uint64_t{0});
  }
  return l;
}

}  // namespace classrag::llm
