#pragma once

#include <stdexcept>
#include <string>

namespace iimlp {

// Caller violated a documented precondition (dimension mismatch, bad argument).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Runtime failure carrying diagnostic context (non-convergence, parse errors,
// unreachable calibration targets). The message holds the details.
class DiagnosticError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace iimlp
