#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace asyncdepth {

/// A caller broke a documented precondition (frame tag, shape, range).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A file did not match its binary or text layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Frames handed to ingestion were out of order or malformed.
class IngestError : public ContractViolation {
 public:
  IngestError(std::size_t index, const std::string& what)
      : ContractViolation(what + " (frame " + std::to_string(index) + ")"),
        index_(index) {}

  /// Position of the first offending frame in the input sequence.
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace asyncdepth
