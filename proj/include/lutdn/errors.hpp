#pragma once

#include <stdexcept>
#include <string>

namespace lutdn {

// Exit codes used by the CLI: 0 ok, 2 config error, 3 I/O error, 4 numeric failure.
enum class ErrorKind { config = 2, io = 3, numeric = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(ErrorKind::config, msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(ErrorKind::io, msg) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(ErrorKind::numeric, msg) {}
};

}  // namespace lutdn
