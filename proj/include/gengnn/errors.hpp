#pragma once

#include <stdexcept>
#include <string>

namespace gengnn {

// Every error carries a short machine-readable code ("E_SHAPE", ...) that the
// CLI prints ahead of the human-readable message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& w) : Error("E_SHAPE", w) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& w) : Error("E_NUMERIC", w) {}
};

// Violated precondition or misuse of an API.
struct ContractError : Error {
    explicit ContractError(const std::string& w) : Error("E_CONTRACT", w) {}
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& w) : Error("E_INVALID_ARG", w) {}
};

struct ParseError : Error {
    ParseError(const std::string& w, long line) : Error("E_PARSE", w), line_(line) {}
    long line() const noexcept { return line_; }

private:
    long line_;
};

struct SchemaError : Error {
    explicit SchemaError(const std::string& w) : Error("E_SCHEMA", w) {}
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error("E_IO", w) {}
};

struct CompatibilityError : Error {
    explicit CompatibilityError(const std::string& w) : Error("E_COMPAT", w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error("E_CONFIG", w) {}
};

}  // namespace gengnn
