#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace miwb {

// Every failure the library reports carries one of these codes. The CLI
// prints the code name verbatim in its machine-readable error line.
enum class Errc {
  FileUnreadable,
  MalformedRecord,
  EmptyCorpus,
  SampleTooLarge,
  JudgeUnparseable,
  EmptyScores,
  InvalidRubric,
  MissingSection,
  TemplateInvalid,
  SplitTooLarge,
  NoCompleteRound,
  WriteFailure,
  EmptyReference,
  MissingReference,
  NoPairs,
  EmptyGroup,
  EmptyInput,
  InvalidAnnotation,
  AuthMissing,
  EndpointError,
  InvalidConversation,
  InvalidConfig,
  InvalidArgument,
  StorageFailure,
  NotFound,
  Conflict,
  UnknownCommand,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Terminal gateway failure after retries are exhausted.
class EndpointError : public Error {
 public:
  EndpointError(const std::string& message, int last_status, int attempts)
      : Error(Errc::EndpointError, message), last_status_(last_status), attempts_(attempts) {}

  // 0 when the last attempt failed below HTTP (connect/timeout).
  int last_status() const noexcept { return last_status_; }
  int attempts() const noexcept { return attempts_; }

 private:
  int last_status_;
  int attempts_;
};

}  // namespace miwb
