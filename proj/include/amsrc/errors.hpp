#pragma once

#include <stdexcept>
#include <string>

namespace amsrc {

// Error categories map to CLI exit codes: config -> 2, data -> 3, numeric -> 4.
enum class ErrorCategory { Config, Data, Numeric, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& code, const std::string& msg)
      : std::runtime_error(code + ": " + msg), category_(cat), code_(code) {}

  ErrorCategory category() const { return category_; }
  const std::string& code() const { return code_; }

 private:
  ErrorCategory category_;
  std::string code_;
};

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& msg) : Error(ErrorCategory::Internal, "ShapeMismatch", msg) {}
};

struct InvalidInput : Error {
  explicit InvalidInput(const std::string& msg) : Error(ErrorCategory::Internal, "InvalidInput", msg) {}
};

struct WindowTooShort : Error {
  explicit WindowTooShort(const std::string& msg) : Error(ErrorCategory::Data, "WindowTooShort", msg) {}
};

struct InvalidBox : Error {
  explicit InvalidBox(const std::string& msg) : Error(ErrorCategory::Data, "InvalidBox", msg) {}
};

struct InvalidConfig : Error {
  explicit InvalidConfig(const std::string& msg) : Error(ErrorCategory::Config, "InvalidConfig", msg) {}
};

struct BadMagic : Error {
  explicit BadMagic(const std::string& msg) : Error(ErrorCategory::Data, "BadMagic", msg) {}
};

struct TruncatedFile : Error {
  explicit TruncatedFile(const std::string& msg) : Error(ErrorCategory::Data, "TruncatedFile", msg) {}
};

struct VersionMismatch : Error {
  explicit VersionMismatch(const std::string& msg) : Error(ErrorCategory::Data, "VersionMismatch", msg) {}
};

struct CorruptCheckpoint : Error {
  explicit CorruptCheckpoint(const std::string& msg) : Error(ErrorCategory::Data, "CorruptCheckpoint", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(ErrorCategory::Data, "IoError", msg) {}
};

struct UndefinedMetric : Error {
  explicit UndefinedMetric(const std::string& msg) : Error(ErrorCategory::Data, "UndefinedMetric", msg) {}
};

struct NumericalFailure : Error {
  explicit NumericalFailure(const std::string& msg) : Error(ErrorCategory::Numeric, "NumericalFailure", msg) {}
};

}  // namespace amsrc
