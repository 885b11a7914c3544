#pragma once

#include <stdexcept>
#include <string>

namespace prunekit {

// Error categories map one-to-one onto the CLI exit codes.
enum class ErrorKind {
    Validation = 2,
    Infeasible = 3,
    Io = 4,
    Numerical = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

inline Error validation_error(const std::string& what) { return Error(ErrorKind::Validation, what); }
inline Error infeasible_error(const std::string& what) { return Error(ErrorKind::Infeasible, what); }
inline Error io_error(const std::string& what) { return Error(ErrorKind::Io, what); }
inline Error numerical_error(const std::string& what) { return Error(ErrorKind::Numerical, what); }

}  // namespace prunekit
