// Error types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace aet {

// Violated contract on inputs (bad shapes, missing data, regime checks).
struct PreconditionError : std::runtime_error {
    explicit PreconditionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure at runtime (solver divergence, marching abort).
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw PreconditionError(msg);
}

inline void require_num(bool cond, const std::string& msg) {
    if (!cond) throw NumericalError(msg);
}

}  // namespace aet
