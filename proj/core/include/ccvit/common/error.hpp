#pragma once

#include <stdexcept>
#include <string>

namespace ccvit {

// Base for every error the library raises. Callers that only want to report
// and exit can catch this one type.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A caller passed arguments that violate an operation's precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN or Inf produced where a finite value is required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Unreadable, truncated or otherwise malformed file.
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace ccvit
