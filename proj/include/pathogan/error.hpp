#pragma once

#include <stdexcept>
#include <string>

namespace pathogan {

// Base of every error raised by the library. Subclasses mirror the failure
// categories callers are expected to branch on.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class SplitInfeasible : public Error {
public:
    using Error::Error;
};

class UnsupportedStrategy : public Error {
public:
    using Error::Error;
};

class DependencyError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidInput(message);
}

}  // namespace pathogan
