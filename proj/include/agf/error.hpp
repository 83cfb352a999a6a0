#pragma once

#include <stdexcept>
#include <string>

namespace agf {

/// Thrown when an operation's preconditions are violated (shape mismatch,
/// invalid argument, use-before-populate and similar caller errors).
class ContractViolation : public std::logic_error {
public:
    explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Thrown by window partitioning when the map dimensions are not divisible
/// by the requested window side. There is no padding path; the caller must
/// pick a divisor.
class WindowSizeError : public ContractViolation {
public:
    explicit WindowSizeError(const std::string& what) : ContractViolation(what) {}
};

/// Thrown by file readers on malformed input (bad magic, truncated payload,
/// trailing bytes). Distinct from ContractViolation so the CLI can map it to
/// its own exit code.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace agf

#define AGF_CHECK(cond, msg)                            \
    do {                                                \
        if (!(cond)) throw ::agf::ContractViolation((msg)); \
    } while (0)
