#include "classrag/common/text.hpp"

#include <algorithm>
#include <cctype>
#include <optional>

namespace classrag::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < s.size()) out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, nl - start));
    start = nl + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string to_upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (prefix.size() > s.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  }
  return true;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

std::string normalize_spaces_lower(std::string_view s) {
  return join(split_whitespace(to_lower(s)), " ");
}

std::vector<std::string> word_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string current;
  for (char c : s) {
    if (is_alnum(c)) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string fold(std::string_view s) {
  std::string spaced;
  spaced.reserve(s.size());
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    // Non-ASCII bytes are kept so accented option text still matches.
    if (u >= 0x80 || is_alnum(c)) {
      spaced.push_back(static_cast<char>(std::tolower(u)));
    } else {
      spaced.push_back(' ');
    }
  }
  return join(split_whitespace(spaced), " ");
}

std::string truncate_utf8(std::string_view s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return std::string(s);
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

std::vector<std::string> sentences(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    const bool terminal = (c == '.' || c == '!' || c == '?');
    const bool boundary = i + 1 == s.size() || is_space(s[i + 1]);
    if (terminal && boundary) {
      auto piece = trim(s.substr(start, i + 1 - start));
      if (!piece.empty()) out.emplace_back(piece);
      start = i + 1;
    }
  }
  if (start < s.size()) {
    auto piece = trim(s.substr(start));
    if (!piece.empty()) out.emplace_back(piece);
  }
  return out;
}

std::vector<Block> extract_blocks(std::string_view s, std::string_view label_prefix) {
  static constexpr std::string_view kBegin = "--- BEGIN ";
  static constexpr std::string_view kEnd = "--- END ";
  std::vector<Block> out;
  std::optional<Block> current;
  for (auto line : split_lines(s)) {
    if (!current && line.substr(0, kBegin.size()) == kBegin) {
      auto label = line.substr(kBegin.size());
      if (label.size() >= 4 && label.substr(label.size() - 4) == " ---") {
        label.remove_suffix(4);
      }
      if (label.substr(0, label_prefix.size()) == label_prefix) {
        current = Block{std::string(label), {}};
      }
    } else if (current && line.substr(0, kEnd.size()) == kEnd &&
               line.substr(kEnd.size()).substr(0, current->label.size()) == current->label) {
      if (!current->body.empty() && current->body.back() == '\n') current->body.pop_back();
      out.push_back(std::move(*current));
      current.reset();
    } else if (current) {
      current->body.append(line);
      current->body.push_back('\n');
    }
  }
  return out;
}

std::string block(std::string_view label, std::string_view body) {
  std::string out = "--- BEGIN " + std::string(label) + " ---\n";
  out.append(body);
  if (out.back() != '\n') out.push_back('\n');
  out += "--- END " + std::string(label) + " ---\n";
  return out;
}

std::string field(std::string_view s, std::string_view key) {
  const std::string prefix = std::string(key) + ":";
  for (auto line : split_lines(s)) {
    if (line.substr(0, prefix.size()) == prefix) return std::string(trim(line.substr(prefix.size())));
  }
  return {};
}

}  // namespace classrag::text
