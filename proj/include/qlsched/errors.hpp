#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qlsched {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed trace input. line() is 1-based and counts physical lines.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " at line " + std::to_string(line)), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// The target VM buffer is full; the caller has to pick another VM or defer.
class AdmissionRejected : public Error {
 public:
  using Error::Error;
};

// No VM has a free buffer slot; the task stays in the global queue.
class AllBuffersFull : public Error {
 public:
  AllBuffersFull() : Error("all VM buffers are full") {}
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& why)
      : Error("config error on \"" + key + "\": " + why), key_(key) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

}  // namespace qlsched
