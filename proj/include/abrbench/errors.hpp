#pragma once

#include <stdexcept>
#include <string>

namespace abrbench {

/// Argument outside an operation's mathematical domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Malformed or invariant-violating input data (trace CSV, manifest JSON,
/// checkpoints). Carries the 1-based line number when one applies.
class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& what, int line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

/// API misuse: stepping a finished session, wrong vector lengths, missing cells.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A solver declined the instance (e.g. enumeration budget exceeded).
class RefusalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace abrbench
