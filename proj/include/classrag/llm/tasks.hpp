#pragma once

#include <string_view>

// Task tags carried on PromptRequest::task, one per prompt family.
namespace classrag::llm::task {

inline constexpr std::string_view screen = "screen";
inline constexpr std::string_view summarize = "summarize";
inline constexpr std::string_view qa_scoped = "qa_scoped";
inline constexpr std::string_view qa_thematic = "qa_thematic";
inline constexpr std::string_view qa_filter = "qa_filter";
inline constexpr std::string_view extract = "extract";
inline constexpr std::string_view community_summary = "community_summary";
inline constexpr std::string_view vector_answer = "vector_answer";
inline constexpr std::string_view local_answer = "local_answer";
inline constexpr std::string_view global_map = "global_map";
inline constexpr std::string_view global_reduce = "global_reduce";
inline constexpr std::string_view route = "route";
inline constexpr std::string_view judge = "judge";
inline constexpr std::string_view mcq_match = "mcq_match";
inline constexpr std::string_view no_retrieval = "no_retrieval";

}  // namespace classrag::llm::task
