#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace acdsim {

// Every failure raised by the library carries a stable kind string; the CLI
// maps kinds onto exit codes and prints them in its machine-readable error.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define ACDSIM_DEFINE_ERROR(Name)                                 \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  };

ACDSIM_DEFINE_ERROR(ParseError)
ACDSIM_DEFINE_ERROR(ValidationError)
ACDSIM_DEFINE_ERROR(UnknownNode)
ACDSIM_DEFINE_ERROR(IllegalAction)
ACDSIM_DEFINE_ERROR(TerminalState)
ACDSIM_DEFINE_ERROR(SpecError)
ACDSIM_DEFINE_ERROR(TooLarge)
ACDSIM_DEFINE_ERROR(ZeroEvidence)
ACDSIM_DEFINE_ERROR(LatentIntervention)
ACDSIM_DEFINE_ERROR(EvidenceOrdering)
ACDSIM_DEFINE_ERROR(ReplayMismatch)

#undef ACDSIM_DEFINE_ERROR

inline bool is_config_error(std::string_view kind) {
  return kind == "ParseError" || kind == "ValidationError" || kind == "SpecError";
}

}  // namespace acdsim
