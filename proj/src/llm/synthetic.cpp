#include "classrag/llm/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <set>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "classrag/common/text.hpp"
#include "classrag/llm/tasks.hpp"

namespace classrag::llm {

namespace {

const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",     "an",   "and",  "are",  "as",    "at",   "be",    "by",    "did",  "do",
      "does",  "for",  "from", "had",  "has",   "have", "how",   "in",    "is",   "it",
      "its",   "of",   "on",   "or",   "that",  "the",  "their", "this",  "to",   "was",
      "were",  "what", "when", "where", "which", "who",  "why",   "with",  "text", "passage",
      "according", "about", "stated", "does", "say", "option", "options", "answer"};
  return words;
}

std::set<std::string> content_words(std::string_view s) {
  std::set<std::string> out;
  for (auto& t : text::word_tokens(s)) {
    if (!stopwords().contains(t)) out.insert(std::move(t));
  }
  return out;
}

std::size_t overlap(const std::set<std::string>& a, std::string_view s) {
  std::size_t n = 0;
  for (const auto& t : content_words(s)) n += a.contains(t) ? 1 : 0;
  return n;
}

std::string first_block(std::string_view prompt, std::string_view label) {
  auto blocks = text::extract_blocks(prompt, label);
  return blocks.empty() ? std::string{} : blocks.front().body;
}

std::string first_words(std::string_view s, std::size_t n) {
  auto words = text::split_whitespace(s);
  if (words.size() > n) words.resize(n);
  auto out = text::join(words, " ");
  while (!out.empty() && std::ispunct(static_cast<unsigned char>(out.back()))) out.pop_back();
  return out;
}

// Sentences long enough to carry a fact.
std::vector<std::string> informative_sentences(std::string_view s) {
  std::vector<std::string> out;
  for (auto& sentence : text::sentences(s)) {
    if (text::split_whitespace(sentence).size() >= 6) out.push_back(std::move(sentence));
  }
  return out;
}

struct Scored {
  std::string sentence;
  std::string source;
  std::size_t score = 0;
};

// Sentence with the highest content-word overlap with the question. Earlier
// sources and sentences win ties.
Scored best_sentence(const std::set<std::string>& question,
                     const std::vector<text::Block>& sources) {
  Scored best;
  bool found = false;
  for (const auto& src : sources) {
    for (auto& sentence : text::sentences(src.body)) {
      const auto score = overlap(question, sentence);
      if (!found || score > best.score) {
        best = {sentence, src.label, score};
        found = true;
      }
    }
  }
  return best;
}

std::string citation_of(std::string_view label) {
  const auto open = label.find('[');
  const auto close = label.find(']', open);
  if (open == std::string_view::npos || close == std::string_view::npos) return {};
  return std::string(label.substr(open, close - open + 1));
}

std::string reply_screen(const PromptRequest& r) {
  static constexpr std::array<std::string_view, 8> kCues = {
      "copyright",        "all rights reserved", "isbn",           "table of contents",
      "acknowledgments",  "acknowledgements",    "learning objectives", "published by"};
  const auto folded = text::fold(first_block(r.user_text(), "PASSAGE"));
  for (auto cue : kCues) {
    if (folded.find(cue) != std::string::npos) return "DISCARD: front matter or publication information";
  }
  return "KEEP";
}

std::string reply_summarize(const PromptRequest& r) {
  std::vector<std::string> leads;
  for (const auto& b : text::extract_blocks(r.user_text(), "SOURCE")) {
    auto sents = text::sentences(b.body);
    if (!sents.empty()) leads.push_back(sents.front());
  }
  return text::truncate_utf8(text::join(leads, " "), 1200);
}

std::string reply_qa(const PromptRequest& r, bool thematic) {
  const auto prompt = r.user_text();
  std::size_t quota = 1;
  try {
    quota = std::stoul(text::field(prompt, "QUOTA"));
  } catch (...) {
  }
  const auto scope = text::field(prompt, "SCOPE");
  const auto source = first_block(prompt, thematic ? "GLOBAL SUMMARY" : "TARGET");
  const auto sents = informative_sentences(source);
  if (sents.empty() || quota == 0) return "";
  std::string out;
  for (std::size_t i = 0; i < quota; ++i) {
    const auto& s = sents[(i * 7) % sents.size()];
    if (i) out += "\n";
    if (thematic) {
      out += fmt::format("Q: What larger theme does the work develop through \"{}\"?\nA: {}\n",
                         first_words(s, 6), s);
    } else if (scope == "sectional") {
      const auto& t = sents[(i * 7 + sents.size() / 2) % sents.size()];
      out += fmt::format("Q: How does this part of the text connect \"{}\" with \"{}\"?\nA: {} {}\n",
                         first_words(s, 5), first_words(t, 5), s, t);
    } else {
      out += fmt::format("Q: What does the text state about \"{}\"?\nA: {}\n", first_words(s, 6),
                         s);
    }
  }
  return out;
}

std::string reply_filter(const PromptRequest& r) {
  const auto q = text::trim(first_block(r.user_text(), "QUESTION"));
  const auto a = text::trim(first_block(r.user_text(), "ANSWER"));
  if (q.empty() || a.empty() || q.back() != '?') return "REJECT: malformed question";
  return "KEEP";
}

bool is_name_token(std::string_view w) {
  return !w.empty() && std::isupper(static_cast<unsigned char>(w.front())) &&
         std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isalpha(c) || c == '-'; });
}

std::string strip_punct(std::string_view w) {
  while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.front()))) w.remove_prefix(1);
  while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.back()))) w.remove_suffix(1);
  return std::string(w);
}

std::string reply_extract(const PromptRequest& r) {
  static const std::set<std::string> kSkip = {"The", "A",  "An",   "In",  "It",   "This", "That",
                                              "He",  "She", "They", "We", "I",    "But",  "And",
                                              "When", "As", "On",  "At",  "If",  "There", "These",
                                              "Its", "His", "Her", "Their", "For", "By", "Of"};
  const auto body = first_block(r.user_text(), "TEXT");
  std::vector<std::string> order;
  std::map<std::string, std::string> description;
  std::vector<std::tuple<std::string, std::string, std::string>> relations;
  for (const auto& sentence : text::sentences(body)) {
    std::vector<std::string> in_sentence;
    std::string current;
    const auto words = text::split_whitespace(sentence);
    for (std::size_t i = 0; i < words.size(); ++i) {
      const auto w = strip_punct(words[i]);
      const bool ends_phrase = !words[i].empty() && std::ispunct(static_cast<unsigned char>(words[i].back()));
      if (is_name_token(w) && !(current.empty() && kSkip.contains(w))) {
        if (!current.empty()) current += " ";
        current += w;
      } else {
        if (!current.empty()) in_sentence.push_back(current);
        current.clear();
      }
      if (ends_phrase && !current.empty()) {
        in_sentence.push_back(current);
        current.clear();
      }
    }
    if (!current.empty()) in_sentence.push_back(current);
    for (const auto& name : in_sentence) {
      if (!description.contains(name)) {
        if (order.size() >= 8) continue;
        order.push_back(name);
        description[name] = text::truncate_utf8(sentence, 240);
      }
    }
    for (std::size_t i = 0; i + 1 < in_sentence.size() && relations.size() < 8; ++i) {
      if (in_sentence[i] != in_sentence[i + 1] && description.contains(in_sentence[i]) &&
          description.contains(in_sentence[i + 1])) {
        relations.emplace_back(in_sentence[i], in_sentence[i + 1], text::truncate_utf8(sentence, 240));
      }
    }
  }
  std::string out;
  for (const auto& name : order) out += fmt::format("ENTITY|{}|concept|{}\n", name, description[name]);
  for (const auto& [a, b, d] : relations) out += fmt::format("RELATION|{}|{}|{}\n", a, b, d);
  return out;
}

std::string reply_community(const PromptRequest& r) {
  const auto entities = first_block(r.user_text(), "ENTITIES");
  std::vector<std::string> names;
  std::string first_description;
  for (auto line : text::split_lines(entities)) {
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) continue;
    if (names.size() < 4) names.emplace_back(text::trim(line.substr(0, colon)));
    if (first_description.empty()) first_description = std::string(text::trim(line.substr(colon + 1)));
  }
  return fmt::format("This community centers on {}. {}", text::join(names, ", "), first_description);
}

std::string reply_grounded(const PromptRequest& r) {
  const auto prompt = r.user_text();
  const auto question = content_words(first_block(prompt, "QUESTION"));
  auto sources = text::extract_blocks(prompt, "PASSAGE");
  for (const char* label : {"SOURCE", "ENTITIES", "COMMUNITY REPORT"}) {
    if (!sources.empty()) break;
    sources = text::extract_blocks(prompt, label);
  }
  if (sources.empty()) return "The material does not cover this question.";
  const auto best = best_sentence(question, sources);
  const auto cite = citation_of(best.source);
  return cite.empty() ? best.sentence : best.sentence + " " + cite;
}

std::string reply_map(const PromptRequest& r) {
  const auto prompt = r.user_text();
  const auto question = content_words(first_block(prompt, "QUESTION"));
  const auto best = best_sentence(question, text::extract_blocks(prompt, "COMMUNITY REPORT"));
  if (best.score == 0) return "SCORE: 0";
  return fmt::format("{}\nSCORE: {}", best.sentence, std::min<std::size_t>(100, best.score * 20));
}

std::string reply_reduce(const PromptRequest& r) {
  const auto partials = text::extract_blocks(r.user_text(), "PARTIAL");
  if (partials.empty()) return "The material does not cover this question.";
  return partials.front().body;
}

std::string reply_route(const PromptRequest& r) {
  const auto prompt = r.user_text();
  if (text::field(prompt, "FORMAT") == "multiple-choice") return "GRAPH_LOCAL";
  const auto q = text::fold(first_block(prompt, "QUESTION"));
  for (std::string_view cue : {"theme", "motif", "overall", "represent", "compare"}) {
    if (q.find(cue) != std::string::npos) return "GRAPH_GLOBAL";
  }
  return "VECTOR";
}

std::string reply_judge(const PromptRequest& r) {
  const auto prompt = r.user_text();
  const auto criterion = text::field(prompt, "CRITERION");
  const auto a = first_block(prompt, "OPTION A");
  const auto b = first_block(prompt, "OPTION B");
  long sa = 0;
  long sb = 0;
  if (criterion == "faithfulness") {
    const auto reference = content_words(first_block(prompt, "REFERENCE ANSWER"));
    sa = static_cast<long>(overlap(reference, a));
    sb = static_cast<long>(overlap(reference, b));
  } else if (criterion == "directness") {
    sa = -static_cast<long>(text::split_whitespace(a).size());
    sb = -static_cast<long>(text::split_whitespace(b).size());
  } else {
    sa = static_cast<long>(content_words(a).size());
    sb = static_cast<long>(content_words(b).size());
  }
  if (sa == sb) return "TIE";
  return sa > sb ? "A" : "B";
}

std::string reply_mcq(const PromptRequest& r) {
  const auto prompt = r.user_text();
  const auto response = content_words(first_block(prompt, "RESPONSE"));
  std::size_t best = 0;
  char best_label = 0;
  bool tie = false;
  for (auto line : text::split_lines(first_block(prompt, "OPTIONS"))) {
    if (line.size() < 3 || line[1] != '.') continue;
    const auto score = overlap(response, line.substr(2));
    if (score > best) {
      best = score;
      best_label = line[0];
      tie = false;
    } else if (score == best && score > 0) {
      tie = true;
    }
  }
  if (best == 0 || tie) return "NONE";
  return std::string(1, best_label);
}

}  // namespace

std::optional<std::string> synthetic_reply(const PromptRequest& r) {
  const std::string_view t = r.task;
  if (t == task::screen) return reply_screen(r);
  if (t == task::summarize) return reply_summarize(r);
  if (t == task::qa_scoped) return reply_qa(r, false);
  if (t == task::qa_thematic) return reply_qa(r, true);
  if (t == task::qa_filter) return reply_filter(r);
  if (t == task::extract) return reply_extract(r);
  if (t == task::community_summary) return reply_community(r);
  if (t == task::vector_answer || t == task::local_answer) return reply_grounded(r);
  if (t == task::global_map) return reply_map(r);
  if (t == task::global_reduce) return reply_reduce(r);
  if (t == task::route) return reply_route(r);
  if (t == task::judge) return reply_judge(r);
  if (t == task::mcq_match) return reply_mcq(r);
  if (t == task::no_retrieval) return std::string("I cannot consult the material for this question.");
  return std::nullopt;
}

}  // namespace classrag::llm
