#pragma once

#include <stdexcept>
#include <string>

namespace spmds {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cyclic or disconnected feeder description.
class TopologyError : public Error {
 public:
  using Error::Error;
};

/// Bad sizes, out-of-range parameters, or an invalid grouping plan.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A local feasible set is empty (e.g. an EV cannot be fully charged).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// An iterative solve (power flow sweep, reference oracle) failed to converge.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a function (e.g. log(1 + x) with x <= -1).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input document.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace spmds
