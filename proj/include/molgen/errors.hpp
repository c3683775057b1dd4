// Copyright 2026 the molgen authors
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLGEN_ERRORS_HPP
#define MOLGEN_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace molgen {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

class SizeLimit : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DisconnectedGraph : public Error {
 public:
  using Error::Error;
};

class UnknownScorer : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

class CheckpointMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyNeighborhood : public Error {
 public:
  using Error::Error;
};

class EmptyGraph : public Error {
 public:
  using Error::Error;
};

class MissingMotifFeatures : public Error {
 public:
  using Error::Error;
};

class MissingEdgeGraph : public Error {
 public:
  using Error::Error;
};

class ScorerFailure : public Error {
 public:
  using Error::Error;
};

// SMILES parse failures carry the kind and the byte offset of the offending
// token so callers can point at the input.
enum class SmilesErrorKind {
  kEmptyInput,
  kUnknownElement,
  kUnclosedRing,
  kUnbalancedParenthesis,
  kValenceViolation,
};

class SmilesError : public Error {
 public:
  SmilesError(SmilesErrorKind kind, std::size_t offset, const std::string& msg)
      : Error(msg + " (byte " + std::to_string(offset) + ")"),
        kind_(kind),
        offset_(offset) {}

  SmilesErrorKind kind() const { return kind_; }
  std::size_t offset() const { return offset_; }

 private:
  SmilesErrorKind kind_;
  std::size_t offset_;
};

}  // namespace molgen

#endif  // MOLGEN_ERRORS_HPP
