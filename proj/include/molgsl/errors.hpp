#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace molgsl {

// Caller misuse: bad shapes, bad config values, missing files.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (CSV contents, SMILES corpora).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// SMILES parse failure; carries the offending character offset.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : std::runtime_error(msg + " (at offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Non-finite loss during training.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace molgsl
