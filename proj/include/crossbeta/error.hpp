#pragma once

#include <stdexcept>
#include <string>

namespace crossbeta {

/// Failure categories. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
    config = 2,
    data = 3,
    numeric = 4,
    bound_violation = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

struct BoundViolation : Error {
    explicit BoundViolation(const std::string& what) : Error(ErrorKind::bound_violation, what) {}
};

}  // namespace crossbeta
