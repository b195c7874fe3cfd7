#pragma once

#include <stdexcept>
#include <string>

namespace cgport {

// Base for every domain error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A master problem that cannot be feasible given the fixed (excluded) assets.
class InfeasibleByConstruction : public Error {
 public:
  using Error::Error;
};

class MissingDuals : public Error {
 public:
  using Error::Error;
};

class DegeneratePortfolio : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class AlignmentError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

}  // namespace cgport
