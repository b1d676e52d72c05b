#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace classrag::text {

std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string_view> split_lines(std::string_view s);
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);
bool contains_ci(std::string_view haystack, std::string_view needle);

// Lowercase, collapse internal whitespace, trim.
std::string normalize_spaces_lower(std::string_view s);

// Lowercase alphanumeric runs; the tokenization used for lexical overlap and
// the mock embedder.
std::vector<std::string> word_tokens(std::string_view s);

// Case- and punctuation-folded form: lowercase, every non-alphanumeric byte
// becomes a space, whitespace collapsed.
std::string fold(std::string_view s);

// Truncates to at most `max_bytes` without splitting a UTF-8 sequence.
std::string truncate_utf8(std::string_view s, std::size_t max_bytes);

// Sentences split on '.', '!' or '?' followed by whitespace; trimmed, non-empty.
std::vector<std::string> sentences(std::string_view s);

struct Block {
  std::string label;  // full label, e.g. "PASSAGE [doc#3]"
  std::string body;
};

// Delimited prompt sections: "--- BEGIN <label> ---" ... "--- END <label> ---".
std::string block(std::string_view label, std::string_view body);
// Every block whose label starts with `label_prefix`, in order.
std::vector<Block> extract_blocks(std::string_view s, std::string_view label_prefix);
// Value of the first "KEY: value" line, trimmed; empty if absent.
std::string field(std::string_view s, std::string_view key);

}  // namespace classrag::text
