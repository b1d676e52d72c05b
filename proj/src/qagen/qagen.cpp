#include "classrag/qagen/qagen.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/hash.hpp"
#include "classrag/common/parallel.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/tasks.hpp"
#include "prompt_assets.hpp"

namespace classrag::qagen {

namespace {

constexpr std::size_t kPromptBudget = 12'000;
constexpr std::array<QuestionType, 3> kTypes = {QuestionType::specific, QuestionType::sectional,
                                                QuestionType::thematic};

std::size_t type_index(QuestionType t) { return static_cast<std::size_t>(t); }

std::string summarize_call(llm::Gateway& gateway, std::string user) {
  const auto request = llm::PromptRequest::make(llm::ModelTier::generator, llm::Phase::generation,
                                                std::string(llm::task::summarize),
                                                std::string(prompts::summarize), std::move(user));
  return std::string(text::trim(gateway.complete(request).text));
}

}  // namespace

bool SummaryTree::complete() const {
  if (layers.empty() || layers.back().size() != 1 || !layers.back().front()) return false;
  return std::all_of(layers.begin(), layers.end(), [](const auto& layer) {
    return std::all_of(layer.begin(), layer.end(), [](const auto& node) { return node.has_value(); });
  });
}

const std::string& SummaryTree::root() const {
  if (!complete()) throw InvalidArgument("summary tree is not complete");
  return *layers.back().front();
}

std::vector<std::size_t> SummaryTree::layer_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& l : layers) out.push_back(l.size());
  return out;
}

nlohmann::json SummaryTree::to_json() const {
  nlohmann::json jl = nlohmann::json::array();
  for (const auto& layer : layers) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : layer) nodes.push_back(n ? nlohmann::json(*n) : nlohmann::json(nullptr));
    jl.push_back(nodes);
  }
  return {{"layers", jl}, {"children", children}};
}

SummaryTree SummaryTree::from_json(const nlohmann::json& j) {
  SummaryTree t;
  for (const auto& layer : j.at("layers")) {
    std::vector<std::optional<std::string>> nodes;
    for (const auto& n : layer) {
      nodes.push_back(n.is_null() ? std::nullopt : std::optional<std::string>(n.get<std::string>()));
    }
    t.layers.push_back(std::move(nodes));
  }
  t.children = j.at("children").get<std::vector<std::vector<std::vector<std::size_t>>>>();
  return t;
}

std::vector<std::vector<std::size_t>> group_summaries(std::span<const std::string> texts,
                                                      std::size_t group_size, std::size_t char_budget) {
  group_size = std::max<std::size_t>(2, group_size);
  std::vector<std::vector<std::size_t>> groups;
  std::size_t i = 0;
  while (i < texts.size()) {
    std::vector<std::size_t> group{i};
    std::size_t chars = texts[i].size();
    ++i;
    while (i < texts.size() && group.size() < group_size &&
           (group.size() < 2 || chars + texts[i].size() <= char_budget)) {
      chars += texts[i].size();
      group.push_back(i++);
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

void hierarchical_summarize(llm::Gateway& gateway, std::span<const std::string> section_texts,
                            SummaryTree& tree, const SummarizeOptions& options) {
  if (section_texts.empty()) throw InvalidArgument("nothing to summarize");
  if (tree.layers.empty()) tree.layers.emplace_back(section_texts.size());
  if (tree.layers.front().size() != section_texts.size()) {
    throw InvalidArgument("checkpoint does not match the sections being summarized");
  }

  for (std::size_t level = 0;; ++level) {
    auto& layer = tree.layers[level];
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < layer.size(); ++i) {
      if (!layer[i]) pending.push_back(i);
    }
    parallel_for(pending.size(), options.parallelism, [&](std::size_t p) {
      const auto i = pending[p];
      std::string user;
      if (level == 0) {
        user = text::block("SOURCE", section_texts[i]);
      } else {
        const auto& kids = tree.children[level - 1][i];
        for (std::size_t k = 0; k < kids.size(); ++k) {
          user += text::block(fmt::format("SOURCE {}", k + 1), *tree.layers[level - 1][kids[k]]);
        }
      }
      layer[i] = summarize_call(gateway, std::move(user));
    });

    if (layer.size() == 1) return;
    if (tree.layers.size() == level + 1) {
      std::vector<std::string> texts;
      for (const auto& n : layer) texts.push_back(*n);
      auto groups = group_summaries(texts, options.group_size, options.char_budget);
      const auto parents = groups.size();
      tree.children.push_back(std::move(groups));
      tree.layers.emplace_back(parents);
    }
  }
}

SummaryTree hierarchical_summarize(llm::Gateway& gateway, std::span<const std::string> section_texts,
                                   const SummarizeOptions& options) {
  SummaryTree tree;
  hierarchical_summarize(gateway, section_texts, tree, options);
  return tree;
}

std::string_view to_string(QuestionType type) {
  switch (type) {
    case QuestionType::specific: return "specific";
    case QuestionType::sectional: return "sectional";
    case QuestionType::thematic: return "thematic";
  }
  return "specific";
}

std::optional<QuestionType> parse_question_type(std::string_view name) {
  const auto n = text::to_lower(text::trim(name));
  if (n == "specific" || n == "short") return QuestionType::specific;
  if (n == "sectional" || n == "section") return QuestionType::sectional;
  if (n == "thematic" || n == "theme") return QuestionType::thematic;
  return std::nullopt;
}

std::string make_qa_id(const QAPair& p) {
  const auto key = fmt::format("{}\n{}\n{}\n{}", p.doc_id, to_string(p.type),
                               p.anchor ? p.anchor->str() : std::string("-"), p.question);
  return sha256_hex(key).substr(0, 16);
}

void validate(const QAPair& p) {
  if (p.question.empty()) throw FormatError("question " + p.qa_id + " is empty");
  if (p.type == QuestionType::thematic && p.anchor) {
    throw FormatError("thematic question " + p.qa_id + " has an anchor");
  }
  if (p.type != QuestionType::thematic && !p.anchor) {
    throw FormatError("question " + p.qa_id + " needs an anchor");
  }
}

nlohmann::json to_json(const QAPair& p) {
  return {{"qa_id", p.qa_id},
          {"doc_id", p.doc_id},
          {"question", p.question},
          {"gold_answer", p.gold_answer},
          {"question_type", to_string(p.type)},
          {"anchor", p.anchor ? nlohmann::json(p.anchor->str()) : nlohmann::json(nullptr)},
          {"provenance", p.provenance}};
}

QAPair qa_from_json(const nlohmann::json& j) {
  const auto first_string = [&](std::initializer_list<const char*> keys) -> std::optional<std::string> {
    for (const auto* k : keys) {
      if (j.contains(k) && j.at(k).is_string()) return j.at(k).get<std::string>();
      if (j.contains(k) && j.at(k).is_number_integer()) return std::to_string(j.at(k).get<long long>());
    }
    return std::nullopt;
  };
  QAPair p;
  p.question = first_string({"question", "Question", "query"}).value_or("");
  if (p.question.empty()) throw FormatError("record has no question");
  p.gold_answer = first_string({"gold_answer", "answer", "Answer", "reference_answer"}).value_or("");
  p.doc_id = first_string({"doc_id", "document", "text_id", "source"}).value_or("");
  const auto type = first_string({"question_type", "type", "category"});
  const auto parsed = type ? parse_question_type(*type) : std::optional<QuestionType>{};
  if (!parsed) throw FormatError("record has no recognizable question type");
  p.type = *parsed;
  if (const auto anchor = first_string({"anchor", "chunk_id", "section_id"})) {
    p.anchor = corpus::UnitId::parse(*anchor);
    if (!p.anchor) throw FormatError("bad anchor '" + *anchor + "'");
  }
  if (j.contains("provenance")) p.provenance = j.at("provenance");
  p.qa_id = first_string({"qa_id", "id"}).value_or("");
  if (p.qa_id.empty()) p.qa_id = make_qa_id(p);
  validate(p);
  return p;
}

std::vector<QuestionDraft> parse_qa_reply(std::string_view reply, std::size_t* malformed) {
  std::vector<QuestionDraft> out;
  std::size_t bad = 0;
  std::optional<QuestionDraft> current;
  std::string* tail = nullptr;  // field receiving continuation lines
  auto flush = [&] {
    if (current) {
      if (!current->question.empty() && !current->answer.empty()) {
        out.push_back(std::move(*current));
      } else {
        ++bad;
      }
    }
    current.reset();
    tail = nullptr;
  };
  for (auto raw : text::split_lines(reply)) {
    const auto line = text::trim(raw);
    if (text::starts_with_ci(line, "Q:")) {
      flush();
      current = QuestionDraft{std::string(text::trim(line.substr(2))), {}};
      tail = &current->question;
    } else if (text::starts_with_ci(line, "A:")) {
      if (!current || !current->answer.empty()) {
        flush();
        ++bad;
        continue;
      }
      current->answer = std::string(text::trim(line.substr(2)));
      tail = &current->answer;
    } else if (line.empty()) {
      if (current) flush();  // a blank line ends the block, complete or not
    } else if (tail != nullptr) {
      *tail += " ";
      *tail += line;
    }
  }
  flush();
  if (malformed) *malformed = bad;
  return out;
}

namespace {

std::vector<QAPair> drafts_to_pairs(std::string_view reply, const std::string& doc_id, QuestionType type,
                                    const std::optional<corpus::UnitId>& anchor, std::size_t quota) {
  std::size_t malformed = 0;
  auto drafts = parse_qa_reply(reply, &malformed);
  if (malformed > 0) spdlog::warn("skipped {} malformed question blocks for {}", malformed, doc_id);
  if (drafts.size() > quota) drafts.resize(quota);
  std::vector<QAPair> out;
  for (auto& d : drafts) {
    QAPair p;
    p.doc_id = doc_id;
    p.question = std::move(d.question);
    p.gold_answer = std::move(d.answer);
    p.type = type;
    p.anchor = anchor;
    p.qa_id = make_qa_id(p);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

std::vector<QAPair> gen_scoped_questions(llm::Gateway& gateway, const std::string& doc_id,
                                         const ScopedTarget& target,
                                         std::span<const std::string> neighbor_summaries,
                                         std::string_view global_summary, std::size_t quota) {
  if (target.type == QuestionType::thematic) throw InvalidArgument("scoped questions need a chunk or section");
  if (quota == 0) return {};
  std::string user = fmt::format("QUOTA: {}\nSCOPE: {}\n", quota, to_string(target.type));
  user += text::block("TARGET [" + target.id.str() + "]", text::truncate_utf8(target.text, kPromptBudget));
  for (std::size_t i = 0; i < neighbor_summaries.size(); ++i) {
    user += text::block(fmt::format("NEIGHBOR SUMMARY {}", i + 1), neighbor_summaries[i]);
  }
  user += text::block("GLOBAL SUMMARY", text::truncate_utf8(global_summary, kPromptBudget));
  const auto request = llm::PromptRequest::make(llm::ModelTier::generator, llm::Phase::generation,
                                                std::string(llm::task::qa_scoped), std::string(prompts::qa_scoped),
                                                std::move(user));
  return drafts_to_pairs(gateway.complete(request).text, doc_id, target.type, target.id, quota);
}

std::vector<QAPair> gen_thematic(llm::Gateway& gateway, const std::string& doc_id,
                                 std::string_view global_summary, std::size_t quota) {
  if (quota == 0) return {};
  const auto user = fmt::format("QUOTA: {}\nSCOPE: thematic\n", quota) +
                    text::block("GLOBAL SUMMARY", text::truncate_utf8(global_summary, kPromptBudget));
  const auto request = llm::PromptRequest::make(llm::ModelTier::generator, llm::Phase::generation,
                                                std::string(llm::task::qa_thematic),
                                                std::string(prompts::qa_thematic), user);
  return drafts_to_pairs(gateway.complete(request).text, doc_id, QuestionType::thematic, std::nullopt, quota);
}

FilterVerdict parse_filter(std::string_view reply) {
  for (auto raw : text::split_lines(reply)) {
    auto line = text::trim(raw);
    if (line.empty()) continue;
    const auto upper = text::to_upper(line);
    if (upper == "KEEP" || upper == "KEEP.") return {true, {}};
    if (upper.starts_with("REJECT")) {
      auto reason = line.substr(6);
      if (!reason.empty() && reason.front() == ':') reason.remove_prefix(1);
      reason = text::trim(reason);
      return {false, reason.empty() ? std::string("rejected") : std::string(reason)};
    }
    break;
  }
  return {false, "unparsable"};
}

FilterResult filter_qa(llm::Gateway& gateway, std::span<const QAPair> pairs, std::span<const std::string> sources,
                       std::size_t parallelism) {
  if (sources.size() != pairs.size()) throw InvalidArgument("filter needs one source per pair");
  std::vector<FilterVerdict> verdicts(pairs.size());
  parallel_for(pairs.size(), parallelism, [&](std::size_t i) {
    const auto user = text::block("SOURCE", text::truncate_utf8(sources[i], kPromptBudget)) +
                      text::block("QUESTION", pairs[i].question) + text::block("ANSWER", pairs[i].gold_answer);
    auto request = llm::PromptRequest::make(llm::ModelTier::judge, llm::Phase::generation,
                                            std::string(llm::task::qa_filter), std::string(prompts::qa_filter), user);
    request.max_output_tokens = 64;
    try {
      verdicts[i] = parse_filter(gateway.complete(request).text);
    } catch (const Error& e) {
      verdicts[i] = {false, "provider error: " + e.code()};
    }
  });
  FilterResult out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (verdicts[i].keep) {
      out.kept.push_back(pairs[i]);
    } else {
      out.rejected.emplace_back(pairs[i], verdicts[i].reason);
    }
  }
  return out;
}

std::size_t& Quotas::operator[](QuestionType t) {
  return t == QuestionType::specific ? specific : t == QuestionType::sectional ? sectional : thematic;
}

std::size_t Quotas::operator[](QuestionType t) const {
  return t == QuestionType::specific ? specific : t == QuestionType::sectional ? sectional : thematic;
}

namespace {

nlohmann::json quotas_json(const Quotas& q) {
  return {{"specific", q.specific}, {"sectional", q.sectional}, {"thematic", q.thematic}};
}

// Seeded Fisher-Yates over [0, n), spelled out for cross-platform stability.
std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[static_cast<std::size_t>(rng() % i)]);
  return order;
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view doc_id, QuestionType type) {
  std::uint64_t state = seed ^ fnv1a64(doc_id) ^ (static_cast<std::uint64_t>(type) + 1) * 0x9e3779b97f4a7c15ULL;
  return splitmix64(state);
}

}  // namespace

nlohmann::json PipelineReport::to_json() const {
  return {{"doc_id", doc_id},
          {"chunks", chunk_count},
          {"sections", section_count},
          {"screened_out", screened_out},
          {"summary_layers", summary_layers},
          {"achieved", quotas_json(achieved)},
          {"rounds", {{"specific", rounds[0]}, {"sectional", rounds[1]}, {"thematic", rounds[2]}}},
          {"shortfall", {{"specific", shortfall[0]}, {"sectional", shortfall[1]}, {"thematic", shortfall[2]}}},
          {"rejected", rejected}};
}

DocumentRun run_pipeline(llm::Gateway& gateway, const corpus::CorpusDocument& doc, const PipelineOptions& options) {
  DocumentRun run;
  auto& report = run.report;
  report.doc_id = doc.doc_id;

  const auto chunks = corpus::chunk_document(doc, options.chunk_size_words);
  auto sections = corpus::group_sections(chunks);
  report.chunk_count = chunks.size();
  report.section_count = sections.size();

  std::vector<std::string> section_texts;
  for (const auto& s : sections) section_texts.push_back(corpus::section_text(s, chunks));
  if (options.screen) {
    std::vector<corpus::ScreeningVerdict> verdicts(sections.size());
    parallel_for(sections.size(), options.parallelism, [&](std::size_t i) {
      verdicts[i] = corpus::screen_content(gateway, section_texts[i], llm::Phase::generation);
    });
    for (std::size_t i = 0; i < sections.size(); ++i) sections[i].screened_out = !verdicts[i].keep;
  }

  std::vector<std::size_t> kept;  // section ordinals
  std::vector<std::size_t> leaf_of(sections.size(), SIZE_MAX);
  std::vector<std::string> kept_texts;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (sections[i].screened_out) {
      ++report.screened_out;
      continue;
    }
    leaf_of[i] = kept.size();
    kept.push_back(i);
    kept_texts.push_back(section_texts[i]);
  }

  const std::size_t total_quota = options.quotas.specific + options.quotas.sectional + options.quotas.thematic;
  if (kept.empty()) {
    spdlog::warn("every section of {} was screened out", doc.doc_id);
    for (const auto t : kTypes) report.shortfall[type_index(t)] = options.quotas[t] > 0;
    return run;
  }
  if (total_quota == 0) return run;

  hierarchical_summarize(gateway, kept_texts, run.summaries, {.parallelism = options.parallelism});
  report.summary_layers = run.summaries.layer_sizes();
  const auto& global = run.summaries.root();
  const auto leaf_summary = [&](std::size_t section) -> std::optional<std::string> {
    if (section >= sections.size() || leaf_of[section] == SIZE_MAX) return std::nullopt;
    return *run.summaries.layers[0][leaf_of[section]];
  };

  // Candidate targets per scoped type.
  std::vector<ScopedTarget> chunk_targets;
  for (const auto s : kept) {
    for (const auto o : sections[s].chunk_ordinals) {
      chunk_targets.push_back({QuestionType::specific, chunks[o].id, chunks[o].text});
    }
  }
  std::vector<ScopedTarget> section_targets;
  for (const auto s : kept) section_targets.push_back({QuestionType::sectional, sections[s].id, section_texts[s]});

  std::set<std::string> seen_ids;
  for (const auto type : kTypes) {
    const auto quota = options.quotas[type];
    auto& achieved = report.achieved[type];
    auto& rounds = report.rounds[type_index(type)];
    const auto& targets = type == QuestionType::specific ? chunk_targets : section_targets;
    const auto order = shuffled(targets.size(), derive_seed(options.seed, doc.doc_id, type));
    std::size_t cursor = 0;

    while (achieved < quota && rounds < options.max_rounds) {
      const auto need = quota - achieved;
      std::vector<QAPair> drafts;
      std::vector<std::string> sources;
      if (type == QuestionType::thematic) {
        ++rounds;
        drafts = gen_thematic(gateway, doc.doc_id, global, need);
        sources.assign(drafts.size(), global);
      } else {
        if (cursor >= order.size()) break;  // every target already used
        ++rounds;
        std::vector<const ScopedTarget*> picked;
        for (; cursor < order.size() && picked.size() < need; ++cursor) picked.push_back(&targets[order[cursor]]);
        std::vector<std::vector<QAPair>> per_target(picked.size());
        parallel_for(picked.size(), options.parallelism, [&](std::size_t i) {
          const auto& t = *picked[i];
          const auto section = type == QuestionType::specific ? t.id.ordinal / corpus::kChunksPerSection : t.id.ordinal;
          std::vector<std::string> neighbors;
          for (const auto s : {section == 0 ? SIZE_MAX : section - 1, type == QuestionType::specific ? section : SIZE_MAX,
                               section + 1}) {
            if (auto summary = leaf_summary(s)) neighbors.push_back(std::move(*summary));
          }
          per_target[i] = gen_scoped_questions(gateway, doc.doc_id, t, neighbors, global, 1);
        });
        for (std::size_t i = 0; i < picked.size(); ++i) {
          for (auto& p : per_target[i]) {
            drafts.push_back(std::move(p));
            sources.push_back(picked[i]->text);
          }
        }
      }

      std::vector<QAPair> fresh;
      std::vector<std::string> fresh_sources;
      for (std::size_t i = 0; i < drafts.size(); ++i) {
        if (!seen_ids.insert(drafts[i].qa_id).second) continue;
        drafts[i].provenance = {{"round", rounds}, {"seed", options.seed}, {"prompt_set", "v1"}};
        if (drafts[i].anchor) drafts[i].provenance["target"] = drafts[i].anchor->str();
        fresh.push_back(std::move(drafts[i]));
        fresh_sources.push_back(std::move(sources[i]));
      }
      auto filtered = filter_qa(gateway, fresh, fresh_sources, options.parallelism);
      report.rejected += filtered.rejected.size();
      for (auto& p : filtered.kept) {
        if (achieved >= quota) break;
        run.pairs.push_back(std::move(p));
        ++achieved;
      }
    }
    if (achieved < quota) {
      report.shortfall[type_index(type)] = true;
      spdlog::warn("{}: {} quota short by {} after {} rounds", doc.doc_id, to_string(type), quota - achieved,
                   rounds);
    }
  }
  return run;
}

Quotas QADataset::counts() const {
  Quotas q;
  for (const auto& p : pairs) ++q[p.type];
  return q;
}

void QADataset::validate() const {
  std::set<std::string> ids;
  for (const auto& p : pairs) {
    qagen::validate(p);
    if (!ids.insert(p.qa_id).second) throw FormatError("duplicate qa_id " + p.qa_id);
  }
}

void write_jsonl(std::ostream& out, const QADataset& dataset) {
  for (const auto& p : dataset.pairs) out << to_json(p).dump() << '\n';
}

QADataset read_jsonl(std::istream& in) {
  QADataset d;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    try {
      d.pairs.push_back(qa_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("line {}: {}", lineno, e.what()));
    } catch (const FormatError& e) {
      throw FormatError(fmt::format("line {}: {}", lineno, e.what()));
    }
  }
  return d;
}

QADataset load_dataset(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::ifstream in(path / "qa.jsonl");
    if (!in) throw NotFound("no qa.jsonl in " + path.string());
    auto d = read_jsonl(in);
    std::ifstream manifest(path / "manifest.json");
    if (manifest) d.manifest = nlohmann::json::parse(manifest);
    d.validate();
    return d;
  }
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open dataset " + path.string());
  QADataset d;
  if (path.extension() == ".json") {
    const auto j = nlohmann::json::parse(in);
    const auto& items = j.is_array() ? j : j.at("pairs");
    for (const auto& item : items) d.pairs.push_back(qa_from_json(item));
  } else {
    d = read_jsonl(in);
  }
  d.validate();
  return d;
}

void save_dataset(const std::filesystem::path& dir, const QADataset& dataset) {
  std::filesystem::create_directories(dir);
  std::ofstream qa(dir / "qa.jsonl", std::ios::binary);
  write_jsonl(qa, dataset);
  std::ofstream manifest(dir / "manifest.json", std::ios::binary);
  manifest << dataset.manifest.dump(2) << '\n';
  if (!qa || !manifest) throw Error("IoError", "failed to write dataset to " + dir.string());
}

QADataset generate_dataset(llm::Gateway& gateway, std::span<const corpus::CorpusDocument> docs,
                           const PipelineOptions& options) {
  const auto before = gateway.usage_snapshot();
  QADataset dataset;
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& doc : docs) {
    auto run = run_pipeline(gateway, doc, options);
    reports.push_back(run.report.to_json());
    for (auto& p : run.pairs) dataset.pairs.push_back(std::move(p));
  }
  dataset.validate();
  const auto counts = dataset.counts();
  nlohmann::json doc_ids = nlohmann::json::array();
  for (const auto& d : docs) doc_ids.push_back(d.doc_id);
  dataset.manifest = {{"format", "classrag.qa_dataset"},
                      {"version", 1},
                      {"documents", doc_ids},
                      {"quotas", quotas_json(options.quotas)},
                      {"counts", quotas_json(counts)},
                      {"seed", options.seed},
                      {"summary_char_threshold", kSummaryCharThreshold},
                      {"chunk_size_words", options.chunk_size_words},
                      {"max_rounds", options.max_rounds},
                      {"reports", reports},
                      {"usage", gateway.usage_snapshot().since(before).to_json()}};
  return dataset;
}

}  // namespace classrag::qagen
