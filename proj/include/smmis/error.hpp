#pragma once

#include <stdexcept>
#include <string>

namespace smmis {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatches, bad counts, invalid parameters.
class InputError : public Error {
public:
    using Error::Error;
};

/// A mixture whose normalizing constant is not strictly positive and finite.
class DegenerateModelError : public Error {
public:
    using Error::Error;
};

/// The ARITS bracket does not contain the requested quantile.
class BracketError : public Error {
public:
    using Error::Error;
};

/// An autoregressive prefix landed where the mixture marginal is zero.
class ZeroEvidenceError : public Error {
public:
    using Error::Error;
};

/// Proportional allocation left one part of the difference form without samples.
class StarvedBudgetError : public Error {
public:
    using Error::Error;
};

/// Self-normalized weights summing to zero, or too few replications.
class DegenerateEstimateError : public Error {
public:
    using Error::Error;
};

class InitFailureError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const char* msg) {
    if (!cond) [[unlikely]]
        throw InputError(msg);
}

}  // namespace smmis
