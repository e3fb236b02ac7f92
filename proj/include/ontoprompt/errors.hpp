#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ontoprompt {

// Base for every failure the engine reports. code() is the stable identifier
// used on the wire (gateway error bodies) and in trace records.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

enum class Severity { kError, kWarning };

struct Diagnostic {
  Severity severity = Severity::kError;
  std::string path;
  std::string message;
};

std::string to_string(Severity s);
std::string describe(const std::vector<Diagnostic>& diagnostics);
std::size_t count_errors(const std::vector<Diagnostic>& diagnostics);

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message) : Error("ParseError", message) {}
};

class SchemaError : public Error {
 public:
  SchemaError(std::string path, const std::string& message)
      : Error("SchemaError", path + ": " + message), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class NotFound : public Error {
 public:
  explicit NotFound(const std::string& message) : Error("NotFound", message) {}
};

class MissingBinding : public Error {
 public:
  explicit MissingBinding(std::string key)
      : Error("MissingBinding", "missing binding for required field '" + key + "'"),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IllegalValue : public Error {
 public:
  IllegalValue(std::string key, const std::string& value, const std::string& why)
      : Error("IllegalValue", "illegal value " + value + " for '" + key + "': " + why),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class NoStructuredPayload : public Error {
 public:
  explicit NoStructuredPayload(const std::string& message)
      : Error("NoStructuredPayload", message) {}
};

class MalformedResponse : public Error {
 public:
  explicit MalformedResponse(const std::string& message)
      : Error("MalformedResponse", message) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& message)
      : Error("PreconditionViolation", message) {}
};

class EmptyInput : public Error {
 public:
  EmptyInput() : Error("EmptyInput", "input text is empty") {}
};

class BackendError : public Error {
 public:
  using Error::Error;
};

class BackendUnavailable : public BackendError {
 public:
  explicit BackendUnavailable(const std::string& message)
      : BackendError("BackendUnavailable", message) {}
};

class AuthError : public BackendError {
 public:
  explicit AuthError(const std::string& message) : BackendError("AuthError", message) {}
};

class TokenLimitExceeded : public BackendError {
 public:
  explicit TokenLimitExceeded(const std::string& message)
      : BackendError("TokenLimitExceeded", message) {}
};

class Timeout : public BackendError {
 public:
  explicit Timeout(const std::string& message) : BackendError("Timeout", message) {}
};

class SessionClosed : public Error {
 public:
  explicit SessionClosed(const std::string& session_id)
      : Error("SessionClosed", "tuning session " + session_id + " is closed") {}
};

class ValidationFailed : public Error {
 public:
  explicit ValidationFailed(std::vector<Diagnostic> diagnostics)
      : Error("ValidationFailed", describe(diagnostics)),
        diagnostics_(std::move(diagnostics)) {}
  const std::vector<Diagnostic>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

class UndefinedMetric : public Error {
 public:
  explicit UndefinedMetric(std::string name)
      : Error("UndefinedMetric", name + " is undefined (zero denominator)"),
        name_(std::move(name)) {}
  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("ConfigError", message) {}
};

class BindError : public Error {
 public:
  explicit BindError(const std::string& message) : Error("BindError", message) {}
};

// A failure inside a dialogue act, tagged with the process that raised it.
class PipelineError : public Error {
 public:
  PipelineError(std::string process, const Error& cause)
      : Error(cause.code(), process + ": " + cause.what()),
        process_(std::move(process)),
        detail_(cause.what()) {}
  const std::string& process() const noexcept { return process_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string process_;
  std::string detail_;
};

}  // namespace ontoprompt
