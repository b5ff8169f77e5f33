#pragma once

#include <stdexcept>
#include <string>

namespace smoothlab {

/// A precondition or invariant of a library operation was violated by the caller's input.
class ContractViolation : public std::invalid_argument {
public:
    explicit ContractViolation(const std::string& what) : std::invalid_argument(what) {}
};

/// Malformed external data (edge lists, CSV, checkpoints).
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

/// Training produced a non-finite loss.
class TrainingDiverged : public std::runtime_error {
public:
    explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw ContractViolation(message);
}

} // namespace smoothlab
