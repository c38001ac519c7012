#pragma once

#include <stdexcept>
#include <string>

namespace vld {

// Process exit codes surfaced by the CLI.
enum class ExitCode : int {
  ok = 0,
  config_error = 2,
  data_error = 3,
  numeric_failure = 4,
};

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode exit_code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ExitCode::config_error, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ExitCode::data_error, what) {}
};

// Shape disagreement between operands.
class DimensionError : public DataError {
 public:
  explicit DimensionError(const std::string& what) : DataError("dimension error: " + what) {}
};

// Enabled channel payload absent from a record, malformed manifest line, ...
class IngestionError : public DataError {
 public:
  explicit IngestionError(const std::string& what) : DataError("ingestion error: " + what) {}
};

// Blob offsets/lengths that do not match the backing file.
class CorruptionError : public DataError {
 public:
  explicit CorruptionError(const std::string& what) : DataError("corruption error: " + what) {}
};

class SchemaError : public DataError {
 public:
  explicit SchemaError(const std::string& what) : DataError("schema error: " + what) {}
};

// Model trained on one region featurizer applied to features from another.
class FeaturizerMismatchError : public DataError {
 public:
  explicit FeaturizerMismatchError(const std::string& what)
      : DataError("featurizer mismatch: " + what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::numeric_failure, what) {}
};

class NonFiniteError : public NumericError {
 public:
  explicit NonFiniteError(const std::string& what) : NumericError("non-finite value: " + what) {}
};

class DegenerateParameterError : public NumericError {
 public:
  explicit DegenerateParameterError(const std::string& what)
      : NumericError("degenerate parameter: " + what) {}
};

// Misuse of the autodiff API (e.g. backward from a non-scalar).
class ContractError : public NumericError {
 public:
  explicit ContractError(const std::string& what) : NumericError("contract error: " + what) {}
};

}  // namespace vld
