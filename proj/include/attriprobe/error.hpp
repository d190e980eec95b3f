#pragma once

#include <stdexcept>
#include <string>

namespace attriprobe {

/// Broad failure classes. The CLI maps these onto process exit codes.
enum class ErrorKind {
  Usage,             // bad flag combination or argument
  Io,                // file could not be opened / written
  Format,            // bad magic or version
  Corruption,        // truncated or inconsistent payload
  Validation,        // non-finite values, bad enum bytes
  DimensionMismatch, // tensor shapes disagree
  DegenerateDataset, // a class is missing, a split is empty
  InsufficientData,  // too few rows for the requested statistic
  UnsupportedVariant,
  UndefinedRatio,    // relative risk with zero baseline risk
  Fold,              // cross-validation cannot build stratified folds
  Numeric,           // non-finite loss or parameters during optimisation
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::DimensionMismatch: return "dimension-mismatch";
    case ErrorKind::DegenerateDataset: return "degenerate-dataset";
    case ErrorKind::InsufficientData: return "insufficient-data";
    case ErrorKind::UnsupportedVariant: return "unsupported-variant";
    case ErrorKind::UndefinedRatio: return "undefined-ratio";
    case ErrorKind::Fold: return "fold";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace attriprobe
