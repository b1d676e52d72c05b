#pragma once

#include <optional>
#include <string>

#include "classrag/llm/types.hpp"

namespace classrag::llm {

// Offline stand-in for a model that understands this toolkit's own prompt
// formats. Every reply is a pure function of the request content, so runs are
// reproducible and a judge built on it is insensitive to option order.
// Returns nullopt for requests whose task it does not recognize.
std::optional<std::string> synthetic_reply(const PromptRequest& request);

}  // namespace classrag::llm
