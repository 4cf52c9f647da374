#pragma once

#include <stdexcept>
#include <string>

namespace fsel {

/// Malformed or unreadable file contents (bad magic, truncation, overflow).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A record or argument that breaks a data invariant.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed arguments outside an operation's precondition.
class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical routine failed to meet its postcondition.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fsel
