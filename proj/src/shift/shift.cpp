#include "classrag/shift/shift.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/parallel.hpp"
#include "classrag/common/text.hpp"
#include "classrag/graph/graph_engine.hpp"
#include "classrag/judge/judge.hpp"
#include "classrag/llm/tasks.hpp"
#include "classrag/router/router.hpp"
#include "classrag/vector/vector_engine.hpp"
#include "prompt_assets.hpp"

namespace classrag::shift {

namespace {

std::string fidelity_header() { return std::string(text::trim(prompts::source_fidelity)) + "\n\n"; }

}  // namespace

std::string standardize_query_prompt(std::string_view prompt) {
  std::string out(prompt);
  bool removed = true;
  while (removed) {
    removed = false;
    for (auto sentence : kOutsideKnowledgeSentences) {
      auto pos = out.find(sentence);
      if (pos == std::string::npos) continue;
      auto end = pos + sentence.size();
      if (end < out.size() && out[end] == '.') ++end;
      while (end < out.size() && out[end] == ' ') ++end;
      out.erase(pos, end - pos);
      removed = true;
    }
  }
  const auto header = fidelity_header();
  if (out.rfind(header, 0) != 0) out = header + out;
  return out;
}

PromptPolicy fidelity_policy() {
  return [](std::string_view prompt) { return standardize_query_prompt(prompt); };
}

KsqaItem ksqa_item_from_json(const nlohmann::json& j) {
  KsqaItem item;
  try {
    item.item_id = j.at("item_id").is_string() ? j.at("item_id").get<std::string>() : j.at("item_id").dump();
    item.subject = text::normalize_spaces_lower(j.value("subject", "other"));
    item.question = j.at("question").get<std::string>();
    item.options = j.at("options").get<std::vector<std::string>>();
    item.correct_index = j.at("correct_index").get<std::size_t>();
    if (j.contains("real_world_index") && !j.at("real_world_index").is_null()) {
      item.real_world_index = j.at("real_world_index").get<std::size_t>();
    }
    item.doc_id = j.at("doc_id").get<std::string>();
    const auto& anchor = j.at("anchor_chunk");
    if (anchor.is_number_unsigned()) {
      item.anchor_chunk = {item.doc_id, anchor.get<std::size_t>()};
    } else {
      auto id = corpus::UnitId::parse(anchor.get<std::string>());
      if (!id) throw FormatError("bad anchor_chunk " + anchor.dump());
      item.anchor_chunk = *id;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("knowledge-shift item: {}", e.what()));
  }
  if (item.options.size() < 2) throw FormatError(item.item_id + ": fewer than two options");
  if (item.correct_index >= item.options.size()) throw FormatError(item.item_id + ": correct_index out of range");
  if (item.real_world_index) {
    if (*item.real_world_index >= item.options.size()) {
      throw FormatError(item.item_id + ": real_world_index out of range");
    }
    if (*item.real_world_index == item.correct_index) {
      throw FormatError(item.item_id + ": real_world_index equals correct_index");
    }
  }
  return item;
}

nlohmann::json to_json(const KsqaItem& item) {
  nlohmann::json j = {{"item_id", item.item_id},         {"subject", item.subject},
                      {"question", item.question},       {"options", item.options},
                      {"correct_index", item.correct_index}, {"doc_id", item.doc_id},
                      {"anchor_chunk", item.anchor_chunk.str()}};
  j["real_world_index"] = item.real_world_index ? nlohmann::json(*item.real_world_index) : nlohmann::json();
  return j;
}

std::vector<KsqaItem> read_ksqa_jsonl(std::istream& in) {
  std::vector<KsqaItem> out;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("line {}: {}", line_no, e.what()));
    }
    auto item = ksqa_item_from_json(j);
    if (!ids.insert(item.item_id).second) throw FormatError("duplicate item_id " + item.item_id);
    out.push_back(std::move(item));
  }
  return out;
}

std::vector<KsqaItem> load_ksqa(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open " + path.string());
  return read_ksqa_jsonl(in);
}

std::string mcq_query(const KsqaItem& item) {
  std::string q = item.question + "\n";
  for (std::size_t i = 0; i < item.options.size(); ++i) {
    q += fmt::format("{}. {}\n", judge::option_label(i), item.options[i]);
  }
  q += "Choose one option.";
  return q;
}

std::string_view to_string(System s) {
  switch (s) {
    case System::vector: return "vector";
    case System::graph_local: return "graph_local";
    case System::graph_global: return "graph_global";
    case System::routed: return "routed";
    case System::no_retrieval: return "no_retrieval";
  }
  return "vector";
}

std::optional<System> parse_system(std::string_view name) {
  const auto n = text::normalize_spaces_lower(name);
  if (n == "route" || n == "routed") return System::routed;
  if (n == "none" || n == "no_retrieval" || n == "no-retrieval") return System::no_retrieval;
  if (auto e = parse_engine(n)) {
    switch (*e) {
      case EngineKind::vector: return System::vector;
      case EngineKind::graph_local: return System::graph_local;
      case EngineKind::graph_global: return System::graph_global;
    }
  }
  return std::nullopt;
}

ShiftCorpus make_shift_corpus(std::span<const corpus::CorpusDocument> docs, std::size_t chunk_size_words) {
  ShiftCorpus c;
  for (const auto& d : docs) {
    if (!c.documents.emplace(d.doc_id, corpus::chunk_document(d, chunk_size_words)).second) {
      throw InvalidArgument("duplicate document " + d.doc_id);
    }
  }
  return c;
}

std::string AccuracyReport::to_csv() const {
  std::string out = "subject,scope,system,n,correct,accuracy\n";
  for (const auto& [k, c] : cells) {
    out += fmt::format("{},{},{},{},{},{:.3f}\n", k.subject, corpus::to_string(k.scope), to_string(k.system), c.n,
                       c.correct, c.accuracy());
  }
  return out;
}

std::string AccuracyReport::to_text() const {
  if (cells.empty()) return "(no results)\n";
  std::set<std::pair<std::string, System>> rows;
  std::set<corpus::Scope> scopes;
  std::size_t subject_w = 7;
  for (const auto& [k, c] : cells) {
    rows.emplace(k.subject, k.system);
    scopes.insert(k.scope);
    subject_w = std::max(subject_w, k.subject.size());
  }
  std::string out = fmt::format("{:<{}}  {:<12}", "subject", subject_w, "system");
  for (auto s : scopes) out += fmt::format("  {:>14}", corpus::to_string(s));
  out += '\n';
  for (const auto& [subject, system] : rows) {
    out += fmt::format("{:<{}}  {:<12}", subject, subject_w, to_string(system));
    for (auto s : scopes) {
      auto it = cells.find({subject, s, system});
      if (it == cells.end() || it->second.n == 0) {
        out += fmt::format("  {:>14}", "-");
      } else {
        out += fmt::format("  {:>14}", fmt::format("{:.1f}% ({}/{})", 100.0 * it->second.accuracy(),
                                                   it->second.correct, it->second.n));
      }
    }
    out += '\n';
  }
  if (!skipped.empty()) out += fmt::format("skipped: {}\n", skipped.size());
  return out;
}

nlohmann::json AccuracyReport::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& [k, c] : cells) {
    rows.push_back({{"subject", k.subject},
                    {"scope", corpus::to_string(k.scope)},
                    {"system", to_string(k.system)},
                    {"n", c.n},
                    {"correct", c.correct},
                    {"accuracy", c.accuracy()},
                    {"usage", c.usage.to_json()}});
  }
  auto items_json = nlohmann::json::array();
  for (const auto& r : items) {
    nlohmann::json j = {{"item_id", r.item_id}, {"subject", r.subject}, {"answer", r.answer},
                        {"correct", r.correct}};
    j["chosen"] = r.chosen ? nlohmann::json(*r.chosen) : nlohmann::json();
    if (r.engine_used) j["engine"] = classrag::to_string(*r.engine_used);
    if (r.error) j["error"] = *r.error;
    items_json.push_back(std::move(j));
  }
  auto skipped_json = nlohmann::json::array();
  for (const auto& s : skipped) skipped_json.push_back({{"item_id", s.item_id}, {"reason", s.reason}});
  return {{"cells", rows}, {"items", items_json}, {"skipped", skipped_json}, {"indexing_passes", indexing_passes}};
}

void AccuracyReport::merge(const AccuracyReport& other) {
  for (const auto& [k, c] : other.cells) {
    auto& mine = cells[k];
    mine.n += c.n;
    mine.correct += c.correct;
    mine.usage += c.usage;
  }
  items.insert(items.end(), other.items.begin(), other.items.end());
  skipped.insert(skipped.end(), other.skipped.begin(), other.skipped.end());
  indexing_passes += other.indexing_passes;
}

enum class IndexKind { vector, graph };

struct IndexCache::Impl {
  mutable std::mutex mutex;
  std::map<std::pair<std::string, IndexKind>, std::shared_ptr<const vector::VectorEngine>> vectors;
  std::map<std::pair<std::string, IndexKind>, std::shared_ptr<const graph::GraphEngine>> graphs;
  std::size_t builds = 0;

  std::shared_ptr<const vector::VectorEngine> vector_engine(llm::Gateway& gateway,
                                                            const std::vector<corpus::Chunk>& chunks) {
    const auto key = std::make_pair(corpus::corpus_fingerprint(chunks), IndexKind::vector);
    std::lock_guard lock(mutex);
    auto& slot = vectors[key];
    if (!slot) {
      slot = std::make_shared<vector::VectorEngine>(gateway, chunks, vector::build_vector_index(gateway, chunks));
      ++builds;
    }
    return slot;
  }

  std::shared_ptr<const graph::GraphEngine> graph_engine(llm::Gateway& gateway,
                                                         const std::vector<corpus::Chunk>& chunks) {
    const auto key = std::make_pair(corpus::corpus_fingerprint(chunks), IndexKind::graph);
    std::lock_guard lock(mutex);
    auto& slot = graphs[key];
    if (!slot) {
      slot = std::make_shared<graph::GraphEngine>(gateway, chunks, graph::build_graph_index(gateway, chunks));
      ++builds;
    }
    return slot;
  }
};

IndexCache::IndexCache() : impl_(std::make_unique<Impl>()) {}
IndexCache::~IndexCache() = default;

std::size_t IndexCache::builds() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->builds;
}

namespace {

bool needs_vector(System s) { return s == System::vector || s == System::routed; }
bool needs_graph(System s) {
  return s == System::graph_local || s == System::graph_global || s == System::routed;
}

struct Prepared {
  const KsqaItem* item = nullptr;
  std::vector<corpus::Chunk> chunks;
  std::shared_ptr<const vector::VectorEngine> vector;
  std::shared_ptr<const graph::GraphEngine> graph;
};

Answer ask_without_retrieval(llm::Gateway& gateway, const std::string& query, const PromptPolicy& policy) {
  auto request = llm::PromptRequest::make(llm::ModelTier::generator, llm::Phase::querying,
                                          std::string(llm::task::no_retrieval),
                                          apply_policy(policy, prompts::no_retrieval_answer),
                                          text::block("QUESTION", query));
  Answer a;
  a.text = gateway.complete(request).text;
  return a;
}

}  // namespace

AccuracyReport run_ksqa(llm::Gateway& gateway, std::span<const KsqaItem> items, corpus::Scope scope, System system,
                        const ShiftCorpus& corpus, IndexCache& cache, const KsqaOptions& options) {
  AccuracyReport report;
  const PromptPolicy policy = options.standardize_prompts ? fidelity_policy() : PromptPolicy{};

  std::map<std::string, std::vector<const KsqaItem*>> by_subject;
  for (const auto& item : items) {
    auto doc = corpus.documents.find(item.doc_id);
    if (doc == corpus.documents.end()) {
      report.skipped.push_back({item.item_id, "unknown document " + item.doc_id});
      continue;
    }
    const auto& chunks = doc->second;
    const bool known = item.anchor_chunk.doc_id == item.doc_id && item.anchor_chunk.ordinal < chunks.size();
    if (!known) {
      report.skipped.push_back({item.item_id, "unknown anchor " + item.anchor_chunk.str()});
      continue;
    }
    by_subject[item.subject].push_back(&item);
  }
  for (const auto& s : report.skipped) spdlog::warn("knowledge-shift item {} skipped: {}", s.item_id, s.reason);

  for (const auto& [subject, subject_items] : by_subject) {
    const auto before = gateway.usage_snapshot();
    const auto builds_before = cache.builds();

    // Scoped chunk sets first, then each distinct index once.
    std::vector<Prepared> prepared(subject_items.size());
    for (std::size_t i = 0; i < subject_items.size(); ++i) {
      const auto* item = subject_items[i];
      const auto& doc_chunks = corpus.documents.at(item->doc_id);
      prepared[i].item = item;
      prepared[i].chunks = corpus::materialize(
          corpus::retrieval_scope(doc_chunks, item->anchor_chunk, scope, options.window_radius), doc_chunks);
    }
    for (auto& p : prepared) {
      if (needs_vector(system)) p.vector = cache.impl().vector_engine(gateway, p.chunks);
      if (needs_graph(system)) p.graph = cache.impl().graph_engine(gateway, p.chunks);
    }

    std::vector<ItemResult> results(prepared.size());
    parallel_for(prepared.size(), options.parallelism, [&](std::size_t i) {
      const auto& p = prepared[i];
      auto& r = results[i];
      r.item_id = p.item->item_id;
      r.subject = subject;
      const auto query = mcq_query(*p.item);
      try {
        Answer answer;
        switch (system) {
          case System::vector:
            answer = p.vector->answer(query, {.k = options.vector_k, .policy = policy});
            break;
          case System::graph_local:
            answer = p.graph->local_search(query, {.policy = policy});
            break;
          case System::graph_global: {
            graph::GlobalSearchOptions global;
            global.policy = policy;
            answer = p.graph->global_search(query, global);
            break;
          }
          case System::routed: {
            router::EngineSet engines;
            engines.vector = p.vector.get();
            engines.graph = p.graph.get();
            engines.vector_options = {.k = options.vector_k, .policy = policy};
            engines.local_options.policy = policy;
            engines.global_options.policy = policy;
            const auto stats = router::stats_of(p.chunks, corpus::parse_subject(subject));
            answer = router::route_and_answer(gateway, query, engines, stats, true).answer;
            break;
          }
          case System::no_retrieval:
            answer = ask_without_retrieval(gateway, query, policy);
            break;
        }
        if (system != System::no_retrieval) r.engine_used = answer.engine;
        r.answer = answer.text;
      } catch (const Error& e) {
        r.error = e.code();
        spdlog::warn("knowledge-shift item {} failed: {} ({})", r.item_id, e.what(), e.code());
        return;
      }
      r.chosen = judge::mcq_choose(gateway, r.answer, p.item->options).chosen;
      r.correct = r.chosen && *r.chosen == p.item->correct_index;
    });

    auto& cell = report.cells[{subject, scope, system}];
    for (auto& r : results) {
      ++cell.n;
      if (r.correct) ++cell.correct;
      report.items.push_back(std::move(r));
    }
    cell.usage = gateway.usage_snapshot().since(before);
    report.indexing_passes += cache.builds() - builds_before;
  }
  return report;
}

AccuracyReport run_ksqa(llm::Gateway& gateway, std::span<const KsqaItem> items, corpus::Scope scope, System system,
                        const ShiftCorpus& corpus, const KsqaOptions& options) {
  IndexCache cache;
  return run_ksqa(gateway, items, scope, system, corpus, cache, options);
}

}  // namespace classrag::shift
