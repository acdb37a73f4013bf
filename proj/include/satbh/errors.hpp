#pragma once

#include <stdexcept>
#include <string>

namespace satbh {

// Caller broke a documented precondition (shape mismatch, value out of domain).
struct ContractViolation : std::logic_error {
    explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// The requested demands/caps combination admits no solution.
struct InfeasibleError : std::runtime_error {
    explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// A solver failed to reach its tolerance within its iteration budget.
struct ConvergenceError : std::runtime_error {
    explicit ConvergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace satbh
