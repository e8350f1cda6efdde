#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lens {

// Base of every error raised by the engine. Subclasses name the failure
// category; callers that only need a message can catch this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A value crossed a module boundary without satisfying its invariant
// (wrong dimension, non-finite component, duplicate id).
class ContractError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& what, int status, std::size_t attempts)
      : Error(what), status_(status), attempts_(attempts) {}

  // Last HTTP status seen, or -1 when no response arrived.
  int status() const noexcept { return status_; }
  std::size_t attempts() const noexcept { return attempts_; }

 private:
  int status_;
  std::size_t attempts_;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

// On-disk data is malformed. section() names the part of the file that
// failed to parse ("header", "metadata", "vectors", "crc").
class FormatError : public Error {
 public:
  FormatError(std::string section, const std::string& detail)
      : Error(section + ": " + detail), section_(std::move(section)) {}

  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class EmptyIndexError : public Error {
 public:
  EmptyIndexError() : Error("index is empty") {}
};

class EmptyModelError : public Error {
 public:
  EmptyModelError() : Error("no non-noise cluster to build a c-TF-IDF model from") {}
};

class PrerequisiteError : public Error {
 public:
  using Error::Error;
};

}  // namespace lens
