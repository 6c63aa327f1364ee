#pragma once

#include <stdexcept>
#include <string>

namespace sensel {

/// Invalid input or parameters. The CLI maps this to exit code 2.
class SpecError : public std::invalid_argument {
public:
    explicit SpecError(const std::string& what) : std::invalid_argument(what) {}
};

/// Requested dimension exceeds what an enumeration-backed routine supports.
class CapacityError : public SpecError {
public:
    explicit CapacityError(const std::string& what) : SpecError(what) {}
};

/// A covariance block could not be factorized even after jitter escalation.
/// The CLI maps this to exit code 3.
class NumericalDegeneracyError : public std::runtime_error {
public:
    explicit NumericalDegeneracyError(const std::string& what) : std::runtime_error(what) {}
};

inline void require_capacity(int n, int cap, const char* routine)
{
    if (n > cap) {
        throw CapacityError(std::string(routine) + ": N = " + std::to_string(n) +
                            " exceeds enumeration limit " + std::to_string(cap));
    }
}

} // namespace sensel
