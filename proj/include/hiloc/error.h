#pragma once

#include <stdexcept>
#include <string>

namespace hiloc {

enum class ErrorCode {
  kInvalidArgument,
  kBehindCamera,
  kIllConditioned,
  kDegeneratePoint,
  kUnderdetermined,
  kNoValidResiduals,
  kUnreliableDisparity,
  kInsufficientParallax,
  kParse,
  kIntegrity,
  kNoOverlap,
  kDegenerateConfiguration,
  kInsufficientData,
  kIo,
  kConfig,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace hiloc
