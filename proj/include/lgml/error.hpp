#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgml/interval.hpp"

namespace lgml {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at position " + std::to_string(position)),
        position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Raised for ill-formed inputs that violate an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Evaluation left the domain of an operation (sqrt of a negative, division
/// by zero, overflow). When raised from interval evaluation over a box, the
/// offending sub-box is attached.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message) : Error(message) {}
  DomainError(const std::string& message, Box box)
      : Error(message + " over " + box.to_string()), box_(std::move(box)), has_box_(true) {}

  bool has_box() const { return has_box_; }
  const Box& box() const { return box_; }

 private:
  Box box_;
  bool has_box_ = false;
};

/// The branch-and-bound budget was exhausted before a verdict was reached.
class InconclusiveError : public Error {
 public:
  using Error::Error;
};

/// An expression node cannot be encoded in the requested SMT-LIB theory.
class UnsupportedNodeError : public Error {
 public:
  explicit UnsupportedNodeError(std::vector<std::string> nodes);
  const std::vector<std::string>& nodes() const { return nodes_; }

 private:
  std::vector<std::string> nodes_;
};

class SolverError : public Error {
 public:
  enum class Kind { Unknown, Timeout, MalformedModel, SpuriousWitness, ExitFailure, LaunchFailure };

  SolverError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class OracleError : public Error {
 public:
  using Error::Error;
};

/// The logic-phase returned a counterexample already in the dataset.
class StalledLoopError : public Error {
 public:
  using Error::Error;
};

}  // namespace lgml
