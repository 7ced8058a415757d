#pragma once

#include <stdexcept>
#include <string>

namespace bicam {

enum class ErrorKind {
  Dimension,
  Parameter,
  Contract,
  State,
  Numeric,
  Format,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so the C boundary can
// map it onto a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error(ErrorKind::Dimension, m) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& m) : Error(ErrorKind::Parameter, m) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& m) : Error(ErrorKind::Contract, m) {}
};

class StateError : public Error {
 public:
  explicit StateError(const std::string& m) : Error(ErrorKind::State, m) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& m) : Error(ErrorKind::Numeric, m) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m) : Error(ErrorKind::Format, m) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::Io, m) {}
};

}  // namespace bicam
