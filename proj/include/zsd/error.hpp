#ifndef ZSD_ERROR_HPP
#define ZSD_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zsd {

// Bad input: malformed files, invariant violations, inconsistent arguments.
// The CLI maps these to exit code 2.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file could not be ingested. Carries the offending 1-based line number
// (0 when the problem is not tied to a line).
class IngestError : public ValidationError {
public:
    IngestError(const std::string& path, std::size_t line, const std::string& what)
        : ValidationError(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
          line_(line)
    {
    }

    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Numerical failure at runtime (singular matrices, non-finite values).
// The CLI maps these to exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace zsd

#endif // ZSD_ERROR_HPP
