#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metaclaw {

enum class Errc {
  invalid_skill,
  io_error,
  corrupt_library,
  empty_failures,
  client_error,
  malformed_output,
  generation_mismatch,
  insufficient_data,
  corrupt_snapshot,
  trainer_unresponsive,
  unknown_task,
  empty_batch,
  role_violation,
  stale_generation,
  version_race,
  missing_output,
  invalid_option,
  empty_results,
  invalid_config,
  parse_error,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::invalid_skill: return "InvalidSkill";
    case Errc::io_error: return "IoError";
    case Errc::corrupt_library: return "CorruptLibrary";
    case Errc::empty_failures: return "EmptyFailures";
    case Errc::client_error: return "ClientError";
    case Errc::malformed_output: return "MalformedOutput";
    case Errc::generation_mismatch: return "GenerationMismatch";
    case Errc::insufficient_data: return "InsufficientData";
    case Errc::corrupt_snapshot: return "CorruptSnapshot";
    case Errc::trainer_unresponsive: return "TrainerUnresponsive";
    case Errc::unknown_task: return "UnknownTask";
    case Errc::empty_batch: return "EmptyBatch";
    case Errc::role_violation: return "RoleViolation";
    case Errc::stale_generation: return "StaleGeneration";
    case Errc::version_race: return "VersionRace";
    case Errc::missing_output: return "MissingOutput";
    case Errc::invalid_option: return "InvalidOption";
    case Errc::empty_results: return "EmptyResults";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::parse_error: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace metaclaw
