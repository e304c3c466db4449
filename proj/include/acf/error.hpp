#pragma once

#include <stdexcept>
#include <string>

namespace acf {

/// Stable error categories; the HTTP layer and the CLI map these to status and exit codes.
enum class ErrorCode {
  parse,
  validation,
  contract,
  degeneracy,
  not_found,
  conflict,
  io,
  internal,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::parse: return "parse_error";
    case ErrorCode::validation: return "validation_error";
    case ErrorCode::contract: return "contract_violation";
    case ErrorCode::degeneracy: return "numerical_degeneracy";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::io: return "io_error";
    case ErrorCode::internal: return "internal_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

}  // namespace acf
