#pragma once

#include <stdexcept>
#include <string>

namespace dorm {

// Base class for every recoverable error raised by the library. The CLI maps
// these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs whose shapes or lengths disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A value outside its documented domain (bad grade, non-finite cost, d <= 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A query on which the requested measure is undefined, e.g. NDCG with every
// grade equal to zero.
class DegenerateQueryError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset or model text.
class ParseError : public Error {
 public:
  using Error::Error;
};

// A constrained problem without a feasible point.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

}  // namespace dorm
