#pragma once

#include <stdexcept>
#include <string>

namespace mcm {

// Exit codes used by the command-line tool. Every library error maps onto one.
enum class ExitCode : int {
    kOk = 0,
    kValidation = 2,
    kIo = 3,
    kNumeric = 4,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

/// Bad input values, malformed configs, precondition violations.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& what) : Error(ExitCode::kValidation, what) {}
};

/// Tensor or vector shape does not match what an operation expects.
class DimensionError : public ValidationError {
public:
    explicit DimensionError(const std::string& what) : ValidationError("dimension error: " + what) {}
};

/// Model/run configuration is inconsistent (e.g. width not divisible by heads).
class ConfigError : public ValidationError {
public:
    explicit ConfigError(const std::string& what) : ValidationError("config error: " + what) {}
};

class IndexError : public ValidationError {
public:
    explicit IndexError(const std::string& what) : ValidationError("index error: " + what) {}
};

class UnsupportedError : public ValidationError {
public:
    explicit UnsupportedError(const std::string& what) : ValidationError("unsupported: " + what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

}  // namespace mcm
