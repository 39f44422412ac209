#pragma once

#include <stdexcept>
#include <string>

namespace sara {

// Every failure raised by the library derives from Error so callers (the CLI
// in particular) can map error classes onto stable exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

// Bad command-line or configuration input.
class UsageError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class TruncationError : public FormatError {
public:
    using FormatError::FormatError;
};

class DataError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace sara
