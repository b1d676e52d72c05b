#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "classrag/corpus/corpus.hpp"
#include "classrag/llm/gateway.hpp"
#include "classrag/qagen/qagen.hpp"

namespace classrag::judge {

enum class Criterion { comprehensiveness, directness, faithfulness, learnability };

inline constexpr std::array<Criterion, 4> kAllCriteria = {
    Criterion::comprehensiveness, Criterion::directness, Criterion::faithfulness, Criterion::learnability};

std::string_view to_string(Criterion criterion);
std::optional<Criterion> parse_criterion(std::string_view name);
// "all" or a comma-separated list. Throws InvalidArgument on unknown names.
std::vector<Criterion> parse_criteria(std::string_view list);

// Fixed rubric question shown to the judge for `criterion`.
std::string_view rubric(Criterion criterion);
// Whether the gold answer is shown to the judge. False only for directness.
bool shows_reference(Criterion criterion);

enum class Pass { original, swapped };
enum class Preference { option_a, option_b, tie };

std::string_view to_string(Pass pass);
std::string_view to_string(Preference preference);

struct Verdict {
  Pass pass = Pass::original;
  Preference preferred = Preference::tie;
  Criterion criterion = Criterion::comprehensiveness;
  std::string raw_reply;
  bool unparsable = false;
  // Error code when the gateway failed; the verdict is then a tie.
  std::optional<std::string> error;
};

nlohmann::json to_json(const Verdict& verdict);
Verdict verdict_from_json(const nlohmann::json& j);

// "A", "B" or "TIE", optionally prefixed by "Option"/"Answer"/"Winner" and
// case-insensitive. nullopt otherwise.
std::optional<Preference> parse_preference(std::string_view reply);

// One judge-tier completion. Never throws on provider failure: the verdict
// records the error and counts as a tie. Throws InvalidArgument on an empty
// answer.
Verdict judge_pair(llm::Gateway& gateway, std::string_view question, std::string_view gold_answer,
                   std::string_view answer_a, std::string_view answer_b, Criterion criterion,
                   Pass pass = Pass::original);

enum class Winner { system_x, system_y, tie };
enum class Vote { system_x, system_y, abstain };

std::string_view to_string(Winner winner);

// Maps a pass to a vote. In the original pass option A is system x; in the
// swapped pass option A is system y.
Vote vote_of(const Verdict& verdict);

// Conflicting votes tie; a single vote wins; two abstentions tie.
Winner aggregate(Vote first, Vote second);

struct AggregatedVerdict {
  Winner winner = Winner::tie;
  Verdict original;
  Verdict swapped;
};

nlohmann::json to_json(const AggregatedVerdict& verdict);
AggregatedVerdict aggregated_from_json(const nlohmann::json& j);

// Two judge calls: (x, y) then (y, x).
AggregatedVerdict abba_judgment(llm::Gateway& gateway, std::string_view question, std::string_view gold_answer,
                                std::string_view answer_x, std::string_view answer_y, Criterion criterion);

// (wins + ties / 2) / n. Throws ZeroComparisons when n is 0 and
// InvalidArgument when wins + ties > n.
double win_rate(std::uint64_t wins, std::uint64_t ties, std::uint64_t n);

// One aggregated comparison with the labels needed to place it in a table.
struct Comparison {
  std::string qa_id;
  std::string system_x;
  std::string system_y;
  Criterion criterion = Criterion::comprehensiveness;
  corpus::Subject subject = corpus::Subject::other;
  qagen::QuestionType question_type = qagen::QuestionType::specific;
  AggregatedVerdict verdict;
};

nlohmann::json to_json(const Comparison& comparison);
Comparison comparison_from_json(const nlohmann::json& j);

void write_comparisons_jsonl(std::ostream& out, std::span<const Comparison> comparisons);
std::vector<Comparison> read_comparisons_jsonl(std::istream& in);

struct CellKey {
  Criterion criterion = Criterion::comprehensiveness;
  corpus::Subject subject = corpus::Subject::other;
  qagen::QuestionType question_type = qagen::QuestionType::specific;
  std::string system;
  std::string opponent;

  auto tie() const { return std::tie(criterion, subject, question_type, system, opponent); }
  bool operator<(const CellKey& o) const { return tie() < o.tie(); }
  bool operator==(const CellKey& o) const { return tie() == o.tie(); }
};

struct Cell {
  std::uint64_t wins = 0;
  std::uint64_t ties = 0;
  std::uint64_t n = 0;
  double rate() const { return win_rate(wins, ties, n); }
};

// Pairwise win rates. A cell exists only when at least one comparison falls
// in it; every cell has a mirror cell with the systems swapped.
struct WinRateTable {
  std::map<CellKey, Cell> cells;

  std::optional<double> rate(const CellKey& key) const;
  // Mean pairwise rate of `system` over the opponents it met in that cell.
  std::optional<double> average_rate(Criterion criterion, corpus::Subject subject, qagen::QuestionType type,
                                     const std::string& system) const;

  // criterion,subject,question_type,system,opponent,wins,ties,n,win_rate
  std::string to_csv() const;
  // Rows: criterion x system; columns: subject x question type; values are
  // average_rate, "-" where no comparison exists.
  std::string to_text() const;
  nlohmann::json to_json() const;
};

WinRateTable tabulate(std::span<const Comparison> comparisons);

// Answers from two systems to one QA pair.
struct PairwiseItem {
  qagen::QAPair qa;
  corpus::Subject subject = corpus::Subject::other;
  std::string system_x;
  std::string system_y;
  std::string answer_x;
  std::string answer_y;
};

// Every item under every criterion, bounded-parallel. Output order is
// item-major, criterion-minor.
std::vector<Comparison> run_pairwise(llm::Gateway& gateway, std::span<const PairwiseItem> items,
                                     std::span<const Criterion> criteria, std::size_t parallelism = 4);

struct McqChoice {
  std::optional<std::size_t> chosen;
  int tier = 1;  // 1: deterministic match, 2: judge call
};

// Option label for index i: "A", "B", ...
std::string option_label(std::size_t index);

// Deterministic match of a free-text response to one option, by label or by
// option text after case and punctuation folding. nullopt unless exactly one
// option matches.
std::optional<std::size_t> match_option(std::string_view response, std::span<const std::string> options);

// Tier 1 first; otherwise one judge-tier completion. An unparsable reply or a
// provider failure leaves `chosen` empty.
McqChoice mcq_choose(llm::Gateway& gateway, std::string_view response, std::span<const std::string> options);

// True when the response chose `correct_index`. Throws InvalidArgument with
// fewer than two options or an out-of-range index.
bool mcq_grade(llm::Gateway& gateway, std::string_view response, std::span<const std::string> options,
               std::size_t correct_index);

}  // namespace classrag::judge
