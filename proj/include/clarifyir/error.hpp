#pragma once

#include <stdexcept>
#include <string>

namespace clarifyir {

// Machine-readable error categories. The CLI prints the code as the first
// token of its one-line error message.
enum class ErrorCode {
  kParse,
  kIntegrity,
  kInvalidArgument,
  kIo,
  kMissingArtifact,
  kNotFound,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace clarifyir
