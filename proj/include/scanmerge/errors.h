#pragma once

#include <stdexcept>
#include <string>

namespace scanmerge {

// All library failures derive from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidMesh : public Error {
 public:
  using Error::Error;
};

class NoVisibility : public Error {
 public:
  using Error::Error;
};

class DisjointView : public Error {
 public:
  using Error::Error;
};

class NoDepth : public Error {
 public:
  using Error::Error;
};

class UnreliableDepth : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  using Error::Error;
};

class RegistrationFailed : public Error {
 public:
  using Error::Error;
};

class InvalidProblem : public Error {
 public:
  using Error::Error;
};

class InvalidSpec : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace scanmerge
