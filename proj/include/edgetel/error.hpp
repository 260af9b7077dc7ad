#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace edgetel {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-positive workload/peak/power and similar arithmetic preconditions.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A value that breaks a type invariant. `field()` is the dotted path of the
// offending field, e.g. "network.rssi_dbm".
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Missing or unexpected key in a JSON document.
class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Malformed JSON. `offset()` is the byte position reported by the parser.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error("parse error at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config " + field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Least-squares fit on a singular system.
class FitError : public Error {
 public:
  using Error::Error;
};

class StorageError : public Error {
 public:
  StorageError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

enum class NetErrorKind {
  Timeout,
  Refused,
  DuplicateClientId,
  ConnectionLost,
  Bind,
  Protocol,
  NotFound,
  ServerError,
  ClientError,
};

const char* to_string(NetErrorKind kind);

class NetworkError : public Error {
 public:
  NetworkError(NetErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  NetErrorKind kind() const { return kind_; }

 private:
  NetErrorKind kind_;
};

}  // namespace edgetel
