#include "classrag/judge/judge.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "classrag/common/error.hpp"
#include "classrag/common/parallel.hpp"
#include "classrag/common/text.hpp"
#include "classrag/llm/tasks.hpp"
#include "prompt_assets.hpp"

namespace classrag::judge {

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::comprehensiveness: return "comprehensiveness";
    case Criterion::directness: return "directness";
    case Criterion::faithfulness: return "faithfulness";
    case Criterion::learnability: return "learnability";
  }
  return "comprehensiveness";
}

std::optional<Criterion> parse_criterion(std::string_view name) {
  const auto n = text::normalize_spaces_lower(name);
  for (auto c : kAllCriteria) {
    if (n == to_string(c)) return c;
  }
  return std::nullopt;
}

std::vector<Criterion> parse_criteria(std::string_view list) {
  if (text::normalize_spaces_lower(list) == "all") return {kAllCriteria.begin(), kAllCriteria.end()};
  std::vector<Criterion> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    const auto name = text::trim(list.substr(start, end - start));
    if (!name.empty()) {
      auto c = parse_criterion(name);
      if (!c) throw InvalidArgument(fmt::format("unknown criterion '{}'", name));
      if (std::find(out.begin(), out.end(), *c) == out.end()) out.push_back(*c);
    }
    start = end + 1;
  }
  if (out.empty()) throw InvalidArgument("no criteria given");
  return out;
}

std::string_view rubric(Criterion c) {
  switch (c) {
    case Criterion::comprehensiveness:
      return "Does the answer cover all relevant points and facets of the question?";
    case Criterion::directness:
      return "Is the answer succinct, and to the point without unnecessary digression?";
    case Criterion::faithfulness:
      return "Is the answer faithful to the ground truth?";
    case Criterion::learnability:
      return "How well does the answer help a student learn or understand the topic? This criterion covers "
             "clarity of explanation, quality of reasoning, and pedagogical value.";
  }
  return "";
}

bool shows_reference(Criterion c) { return c != Criterion::directness; }

std::string_view to_string(Pass p) { return p == Pass::original ? "original" : "swapped"; }

std::string_view to_string(Preference p) {
  switch (p) {
    case Preference::option_a: return "option_a";
    case Preference::option_b: return "option_b";
    case Preference::tie: return "tie";
  }
  return "tie";
}

std::string_view to_string(Winner w) {
  switch (w) {
    case Winner::system_x: return "system_x";
    case Winner::system_y: return "system_y";
    case Winner::tie: return "tie";
  }
  return "tie";
}

namespace {

template <class E, std::size_t N>
E parse_enum(const std::string& s, const std::array<E, N>& all, const char* what) {
  for (auto e : all) {
    if (to_string(e) == s) return e;
  }
  throw FormatError(fmt::format("unknown {} '{}'", what, s));
}

constexpr std::array<Pass, 2> kPasses = {Pass::original, Pass::swapped};
constexpr std::array<Preference, 3> kPreferences = {Preference::option_a, Preference::option_b, Preference::tie};
constexpr std::array<Winner, 3> kWinners = {Winner::system_x, Winner::system_y, Winner::tie};

Criterion criterion_from(const nlohmann::json& j) {
  auto c = parse_criterion(j.get<std::string>());
  if (!c) throw FormatError("unknown criterion " + j.dump());
  return *c;
}

}  // namespace

nlohmann::json to_json(const Verdict& v) {
  nlohmann::json j = {{"pass", to_string(v.pass)},
                      {"preferred", to_string(v.preferred)},
                      {"criterion", to_string(v.criterion)},
                      {"raw_reply", v.raw_reply},
                      {"unparsable", v.unparsable}};
  if (v.error) j["error"] = *v.error;
  return j;
}

Verdict verdict_from_json(const nlohmann::json& j) {
  Verdict v;
  v.pass = parse_enum(j.at("pass").get<std::string>(), kPasses, "pass");
  v.preferred = parse_enum(j.at("preferred").get<std::string>(), kPreferences, "preference");
  v.criterion = criterion_from(j.at("criterion"));
  v.raw_reply = j.value("raw_reply", "");
  v.unparsable = j.value("unparsable", false);
  if (j.contains("error")) v.error = j.at("error").get<std::string>();
  return v;
}

std::optional<Preference> parse_preference(std::string_view reply) {
  auto tokens = text::word_tokens(reply);
  static const std::set<std::string> kLeadIns = {"option", "answer", "winner", "verdict", "final", "is", "the"};
  std::size_t i = 0;
  while (i < tokens.size() && kLeadIns.contains(tokens[i])) ++i;
  if (i >= tokens.size()) return std::nullopt;
  const auto& t = tokens[i];
  std::optional<Preference> p;
  if (t == "a") p = Preference::option_a;
  if (t == "b") p = Preference::option_b;
  if (t == "tie") p = Preference::tie;
  // A bare token must stand alone or be followed only by trailing words that
  // do not name another option.
  if (!p) return std::nullopt;
  for (std::size_t k = i + 1; k < tokens.size(); ++k) {
    const auto& u = tokens[k];
    if ((u == "a" || u == "b" || u == "tie") && u != t) return std::nullopt;
  }
  return p;
}

Verdict judge_pair(llm::Gateway& gateway, std::string_view question, std::string_view gold_answer,
                   std::string_view answer_a, std::string_view answer_b, Criterion criterion, Pass pass) {
  if (text::trim(answer_a).empty() || text::trim(answer_b).empty()) {
    throw InvalidArgument("judge_pair needs two non-empty answers");
  }
  std::string user = fmt::format("CRITERION: {}\nRUBRIC: {}\n", to_string(criterion), rubric(criterion));
  user += text::block("QUESTION", question);
  if (shows_reference(criterion)) user += text::block("REFERENCE ANSWER", gold_answer);
  user += text::block("OPTION A", answer_a);
  user += text::block("OPTION B", answer_b);
  auto request = llm::PromptRequest::make(llm::ModelTier::judge, llm::Phase::judging, std::string(llm::task::judge),
                                          std::string(prompts::judge_pairwise), user);
  request.max_output_tokens = 16;

  Verdict v;
  v.pass = pass;
  v.criterion = criterion;
  try {
    v.raw_reply = gateway.complete(request).text;
  } catch (const Error& e) {
    v.error = e.code();
    spdlog::warn("judge call failed ({}), counted as tie", e.code());
    return v;
  }
  if (auto p = parse_preference(v.raw_reply)) {
    v.preferred = *p;
  } else {
    v.unparsable = true;
  }
  return v;
}

Vote vote_of(const Verdict& v) {
  if (v.preferred == Preference::tie) return Vote::abstain;
  const bool a = v.preferred == Preference::option_a;
  if (v.pass == Pass::original) return a ? Vote::system_x : Vote::system_y;
  return a ? Vote::system_y : Vote::system_x;
}

Winner aggregate(Vote first, Vote second) {
  auto as_winner = [](Vote v) { return v == Vote::system_x ? Winner::system_x : Winner::system_y; };
  if (first == Vote::abstain && second == Vote::abstain) return Winner::tie;
  if (first == Vote::abstain) return as_winner(second);
  if (second == Vote::abstain) return as_winner(first);
  return first == second ? as_winner(first) : Winner::tie;
}

nlohmann::json to_json(const AggregatedVerdict& v) {
  return {{"winner", to_string(v.winner)}, {"original", to_json(v.original)}, {"swapped", to_json(v.swapped)}};
}

AggregatedVerdict aggregated_from_json(const nlohmann::json& j) {
  AggregatedVerdict v;
  v.original = verdict_from_json(j.at("original"));
  v.swapped = verdict_from_json(j.at("swapped"));
  v.winner = parse_enum(j.at("winner").get<std::string>(), kWinners, "winner");
  if (v.winner != aggregate(vote_of(v.original), vote_of(v.swapped))) {
    throw FormatError("stored winner disagrees with its passes");
  }
  return v;
}

AggregatedVerdict abba_judgment(llm::Gateway& gateway, std::string_view question, std::string_view gold_answer,
                                std::string_view answer_x, std::string_view answer_y, Criterion criterion) {
  AggregatedVerdict v;
  v.original = judge_pair(gateway, question, gold_answer, answer_x, answer_y, criterion, Pass::original);
  v.swapped = judge_pair(gateway, question, gold_answer, answer_y, answer_x, criterion, Pass::swapped);
  v.winner = aggregate(vote_of(v.original), vote_of(v.swapped));
  return v;
}

double win_rate(std::uint64_t wins, std::uint64_t ties, std::uint64_t n) {
  if (n == 0) throw ZeroComparisons("win rate over zero comparisons");
  if (wins + ties > n) throw InvalidArgument(fmt::format("wins {} + ties {} exceed n {}", wins, ties, n));
  return (static_cast<double>(wins) + 0.5 * static_cast<double>(ties)) / static_cast<double>(n);
}

nlohmann::json to_json(const Comparison& c) {
  return {{"qa_id", c.qa_id},
          {"system_x", c.system_x},
          {"system_y", c.system_y},
          {"criterion", to_string(c.criterion)},
          {"subject", corpus::to_string(c.subject)},
          {"question_type", qagen::to_string(c.question_type)},
          {"verdict", to_json(c.verdict)}};
}

Comparison comparison_from_json(const nlohmann::json& j) {
  Comparison c;
  c.qa_id = j.value("qa_id", "");
  c.system_x = j.at("system_x").get<std::string>();
  c.system_y = j.at("system_y").get<std::string>();
  c.criterion = criterion_from(j.at("criterion"));
  c.subject = corpus::parse_subject(j.at("subject").get<std::string>());
  auto type = qagen::parse_question_type(j.at("question_type").get<std::string>());
  if (!type) throw FormatError("unknown question type " + j.at("question_type").dump());
  c.question_type = *type;
  c.verdict = aggregated_from_json(j.at("verdict"));
  return c;
}

void write_comparisons_jsonl(std::ostream& out, std::span<const Comparison> comparisons) {
  for (const auto& c : comparisons) out << to_json(c).dump() << '\n';
}

std::vector<Comparison> read_comparisons_jsonl(std::istream& in) {
  std::vector<Comparison> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(comparison_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("verdicts line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

std::optional<double> WinRateTable::rate(const CellKey& key) const {
  auto it = cells.find(key);
  if (it == cells.end() || it->second.n == 0) return std::nullopt;
  return it->second.rate();
}

std::optional<double> WinRateTable::average_rate(Criterion criterion, corpus::Subject subject,
                                                 qagen::QuestionType type, const std::string& system) const {
  CellKey lo{criterion, subject, type, system, ""};
  double sum = 0.0;
  std::size_t count = 0;
  for (auto it = cells.lower_bound(lo); it != cells.end(); ++it) {
    const auto& k = it->first;
    if (k.criterion != criterion || k.subject != subject || k.question_type != type || k.system != system) break;
    sum += it->second.rate();
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::string WinRateTable::to_csv() const {
  std::string out = "criterion,subject,question_type,system,opponent,wins,ties,n,win_rate\n";
  for (const auto& [k, c] : cells) {
    out += fmt::format("{},{},{},{},{},{},{},{},{:.3f}\n", to_string(k.criterion), corpus::to_string(k.subject),
                       qagen::to_string(k.question_type), k.system, k.opponent, c.wins, c.ties, c.n, c.rate());
  }
  return out;
}

std::string WinRateTable::to_text() const {
  std::set<std::pair<corpus::Subject, qagen::QuestionType>> columns;
  std::set<std::string> systems;
  std::set<Criterion> criteria;
  for (const auto& [k, c] : cells) {
    columns.emplace(k.subject, k.question_type);
    systems.insert(k.system);
    criteria.insert(k.criterion);
  }
  if (cells.empty()) return "(no comparisons)\n";

  std::size_t crit_w = std::string_view("criterion").size();
  for (auto c : criteria) crit_w = std::max(crit_w, to_string(c).size());
  std::size_t sys_w = std::string_view("system").size();
  for (const auto& s : systems) sys_w = std::max(sys_w, s.size());
  std::vector<std::string> headers;
  for (const auto& [subject, type] : columns) {
    headers.push_back(fmt::format("{}/{}", corpus::to_string(subject), qagen::to_string(type)));
  }

  std::string out = fmt::format("{:<{}}  {:<{}}", "criterion", crit_w, "system", sys_w);
  for (const auto& h : headers) out += fmt::format("  {:>{}}", h, std::max<std::size_t>(h.size(), 5));
  out += '\n';
  for (auto criterion : criteria) {
    for (const auto& system : systems) {
      out += fmt::format("{:<{}}  {:<{}}", to_string(criterion), crit_w, system, sys_w);
      std::size_t col = 0;
      for (const auto& [subject, type] : columns) {
        const auto width = std::max<std::size_t>(headers[col++].size(), 5);
        const auto r = average_rate(criterion, subject, type, system);
        out += r ? fmt::format("  {:>{}.3f}", *r, width) : fmt::format("  {:>{}}", "-", width);
      }
      out += '\n';
    }
  }
  return out;
}

nlohmann::json WinRateTable::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& [k, c] : cells) {
    rows.push_back({{"criterion", to_string(k.criterion)},
                    {"subject", corpus::to_string(k.subject)},
                    {"question_type", qagen::to_string(k.question_type)},
                    {"system", k.system},
                    {"opponent", k.opponent},
                    {"wins", c.wins},
                    {"ties", c.ties},
                    {"n", c.n},
                    {"win_rate", c.rate()}});
  }
  return {{"cells", rows}};
}

WinRateTable tabulate(std::span<const Comparison> comparisons) {
  WinRateTable table;
  for (const auto& c : comparisons) {
    CellKey kx{c.criterion, c.subject, c.question_type, c.system_x, c.system_y};
    CellKey ky{c.criterion, c.subject, c.question_type, c.system_y, c.system_x};
    auto& x = table.cells[kx];
    auto& y = table.cells[ky];
    ++x.n;
    ++y.n;
    switch (c.verdict.winner) {
      case Winner::system_x: ++x.wins; break;
      case Winner::system_y: ++y.wins; break;
      case Winner::tie:
        ++x.ties;
        ++y.ties;
        break;
    }
  }
  return table;
}

std::vector<Comparison> run_pairwise(llm::Gateway& gateway, std::span<const PairwiseItem> items,
                                     std::span<const Criterion> criteria, std::size_t parallelism) {
  std::vector<Comparison> out(items.size() * criteria.size());
  parallel_for(out.size(), parallelism, [&](std::size_t i) {
    const auto& item = items[i / criteria.size()];
    const auto criterion = criteria[i % criteria.size()];
    auto& c = out[i];
    c.qa_id = item.qa.qa_id;
    c.system_x = item.system_x;
    c.system_y = item.system_y;
    c.criterion = criterion;
    c.subject = item.subject;
    c.question_type = item.qa.type;
    c.verdict = abba_judgment(gateway, item.qa.question, item.qa.gold_answer, item.answer_x, item.answer_y, criterion);
  });
  return out;
}

std::string option_label(std::size_t index) {
  if (index < 26) return std::string(1, static_cast<char>('A' + index));
  return std::to_string(index + 1);
}

namespace {

bool contains_phrase(const std::string& padded_haystack, const std::string& folded_needle) {
  if (folded_needle.empty()) return false;
  return padded_haystack.find(" " + folded_needle + " ") != std::string::npos;
}

// Whether the response names `label` as its choice. A bare "a" is an English
// article, so labels only count alone, at the head of the reply, or after a
// choice word.
bool names_label(std::string_view response, const std::string& folded, const std::string& label) {
  const auto l = text::to_lower(label);
  if (folded == l) return true;
  const auto trimmed = text::trim(response);
  const auto upper = text::to_upper(label);
  for (std::string_view suffix : {".", ")", ":"}) {
    if (text::starts_with_ci(trimmed, upper + std::string(suffix))) return true;
  }
  if (text::starts_with_ci(trimmed, "(" + upper + ")")) return true;
  const auto padded = " " + folded + " ";
  for (std::string_view lead : {"option", "answer is", "answer", "choice", "choose", "correct answer is"}) {
    if (padded.find(fmt::format(" {} {} ", lead, l)) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

std::optional<std::size_t> match_option(std::string_view response, std::span<const std::string> options) {
  const auto folded = text::fold(response);
  if (folded.empty()) return std::nullopt;
  const auto padded = " " + folded + " ";
  std::set<std::size_t> by_label;
  std::vector<std::size_t> by_text;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (names_label(response, folded, option_label(i))) by_label.insert(i);
    if (contains_phrase(padded, text::fold(options[i]))) by_text.push_back(i);
  }
  // An option whose text sits inside another matched option's text ("red"
  // within "red light") is not a separate match.
  std::set<std::size_t> texts;
  for (auto i : by_text) {
    const auto fi = " " + text::fold(options[i]) + " ";
    bool nested = false;
    for (auto j : by_text) {
      if (i == j) continue;
      const auto fj = " " + text::fold(options[j]) + " ";
      if (fj.size() > fi.size() && fj.find(fi) != std::string::npos) nested = true;
    }
    if (!nested) texts.insert(i);
  }
  std::set<std::size_t> all = by_label;
  all.insert(texts.begin(), texts.end());
  if (all.size() != 1) return std::nullopt;
  return *all.begin();
}

McqChoice mcq_choose(llm::Gateway& gateway, std::string_view response, std::span<const std::string> options) {
  McqChoice choice;
  if (auto m = match_option(response, options)) {
    choice.chosen = m;
    return choice;
  }
  choice.tier = 2;
  std::string listing;
  for (std::size_t i = 0; i < options.size(); ++i) listing += fmt::format("{}. {}\n", option_label(i), options[i]);
  const auto user = text::block("OPTIONS", listing) + text::block("RESPONSE", response);
  auto request = llm::PromptRequest::make(llm::ModelTier::judge, llm::Phase::judging, std::string(llm::task::mcq_match),
                                          std::string(prompts::mcq_match), user);
  request.max_output_tokens = 8;
  std::string reply;
  try {
    reply = gateway.complete(request).text;
  } catch (const Error& e) {
    spdlog::warn("mcq match call failed ({}), graded incorrect", e.code());
    return choice;
  }
  const auto tokens = text::word_tokens(reply);
  if (tokens.size() != 1) return choice;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (tokens[0] == text::to_lower(option_label(i))) choice.chosen = i;
  }
  return choice;
}

bool mcq_grade(llm::Gateway& gateway, std::string_view response, std::span<const std::string> options,
               std::size_t correct_index) {
  if (options.size() < 2) throw InvalidArgument("multiple-choice grading needs at least two options");
  if (correct_index >= options.size()) throw InvalidArgument("correct index out of range");
  const auto choice = mcq_choose(gateway, response, options);
  return choice.chosen && *choice.chosen == correct_index;
}

}  // namespace classrag::judge
