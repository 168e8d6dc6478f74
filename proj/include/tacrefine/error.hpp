#pragma once

#include <stdexcept>
#include <string>

namespace tacrefine {

// Machine-readable failure category. The CLI prints it verbatim.
enum class ErrorCode {
  invalid_argument,
  shape_mismatch,
  non_contact,
  io,
  format,
  version,
  checksum,
  truncated,
  domain_mismatch,
  config,
  non_finite,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::non_contact: return "non_contact";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::version: return "version";
    case ErrorCode::checksum: return "checksum";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::domain_mismatch: return "domain_mismatch";
    case ErrorCode::config: return "config";
    case ErrorCode::non_finite: return "non_finite";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tacrefine
