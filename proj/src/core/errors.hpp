#pragma once

#include <stdexcept>
#include <string>

namespace ebmut {

// Bad input: malformed files, invalid parameters, violated preconditions.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numeric procedure failed (non-convergence, unbracketed search, degenerate fit).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// File system failures (missing input, unwritable output).
class IoError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

}  // namespace ebmut
