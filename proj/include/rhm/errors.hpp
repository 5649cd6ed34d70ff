#pragma once

#include <stdexcept>
#include <string>

namespace rhm {

// Error taxonomy shared by the library and the CLI. The CLI maps each class
// onto a distinct process exit code (see tools/rhm.cpp).
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated parameter constraint or malformed input value (exit 3).
class constraint_error : public error {
public:
    using error::error;
};

// Context that no derivation of the grammar can produce (exit 3).
class incompatible_context_error : public constraint_error {
public:
    using constraint_error::constraint_error;
};

// File could not be read, written or parsed (exit 4).
class io_error : public error {
public:
    using error::error;
};

// An enumeration or DP would exceed its configured resource cap (exit 5).
class cap_error : public error {
public:
    using error::error;
};

}  // namespace rhm
