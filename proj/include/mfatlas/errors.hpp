#pragma once

#include <stdexcept>
#include <string>

namespace mfatlas {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the domain of a function (e.g. u outside [0,1]).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A model assumption (UE, E1, E2, H) is violated.
/// `assumption` names the first failing check, `witness` is the offending u
/// (NaN when the check is not pointwise).
class ValidationError : public Error {
 public:
  ValidationError(std::string assumption, double witness, const std::string& what)
      : Error(what), assumption_(std::move(assumption)), witness_(witness) {}

  const std::string& assumption() const { return assumption_; }
  double witness() const { return witness_; }

 private:
  std::string assumption_;
  double witness_;
};

class DivergenceDetected : public Error {
 public:
  using Error::Error;
};

class ToleranceNotMet : public Error {
 public:
  ToleranceNotMet(const std::string& what, double estimate, double error)
      : Error(what), estimate_(estimate), error_(error) {}
  double estimate() const { return estimate_; }
  double error() const { return error_; }

 private:
  double estimate_;
  double error_;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

/// Query that only makes sense in a phase the model is not in
/// (e.g. the capital density when p_c <= 1).
class PhaseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class NumericalBlowup : public Error {
 public:
  using Error::Error;
};

/// Malformed JSON; line and column are 1-based.
class ParseError : public ConfigError {
 public:
  ParseError(const std::string& what, std::size_t line, std::size_t column)
      : ConfigError(what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Well-formed JSON that does not match the config schema.
class SchemaError : public ConfigError {
 public:
  SchemaError(const std::string& key_path, const std::string& what)
      : ConfigError(key_path + ": " + what), key_path_(key_path) {}
  const std::string& key_path() const { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace mfatlas
