#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace classrag {

// Base for every error the toolkit raises. `code()` is the stable identifier
// that also appears in service error bodies ({code, message}).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define CLASSRAG_DEFINE_ERROR(Name)                                 \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& message) : Error(#Name, message) {} \
  }

// Provider transport failed after all retries (network, 5xx, 429).
CLASSRAG_DEFINE_ERROR(TransportError);
// Provider rejected the request; retrying would not help.
CLASSRAG_DEFINE_ERROR(ProviderRefusal);
CLASSRAG_DEFINE_ERROR(DimensionMismatch);
CLASSRAG_DEFINE_ERROR(EmptyDocument);
CLASSRAG_DEFINE_ERROR(UnknownAnchor);
CLASSRAG_DEFINE_ERROR(InvalidK);
CLASSRAG_DEFINE_ERROR(NoGraph);
CLASSRAG_DEFINE_ERROR(NoEvidence);
CLASSRAG_DEFINE_ERROR(ZeroComparisons);
CLASSRAG_DEFINE_ERROR(IndexMissing);
CLASSRAG_DEFINE_ERROR(FingerprintMismatch);
CLASSRAG_DEFINE_ERROR(InvalidArgument);
CLASSRAG_DEFINE_ERROR(FormatError);
CLASSRAG_DEFINE_ERROR(NotFound);
CLASSRAG_DEFINE_ERROR(Conflict);

#undef CLASSRAG_DEFINE_ERROR

}  // namespace classrag
