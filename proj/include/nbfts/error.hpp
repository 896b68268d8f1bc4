#pragma once

#include <stdexcept>
#include <string>

namespace nbfts {

// Error taxonomy shared across the library. Each carries a stable short code
// so the CLI can emit machine-parsable one-line failures.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct InvalidParameterError : Error {
  explicit InvalidParameterError(const std::string& msg)
      : Error("NBFTS_E_PARAM", msg) {}
};

struct InvalidStateError : Error {
  explicit InvalidStateError(const std::string& msg)
      : Error("NBFTS_E_STATE", msg) {}
};

struct InvalidInputError : Error {
  explicit InvalidInputError(const std::string& msg)
      : Error("NBFTS_E_INPUT", msg) {}
};

struct DegenerateBasisError : Error {
  explicit DegenerateBasisError(const std::string& msg)
      : Error("NBFTS_E_BASIS", msg) {}
};

struct OutOfBoundsError : Error {
  explicit OutOfBoundsError(const std::string& msg)
      : Error("NBFTS_E_BOUNDS", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("NBFTS_E_IO", msg) {}
};

}  // namespace nbfts
