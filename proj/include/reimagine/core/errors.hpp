#pragma once

#include <stdexcept>
#include <string>

namespace reimagine {

// Invalid arguments use std::invalid_argument directly. The types below
// cover the remaining failure classes; the CLI maps them to exit codes.

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed text input. Carries the 1-based line when known (0 otherwise).
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, int line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

// Well-formed input that violates a model invariant.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Corrupt binary container.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& tensor, const std::string& what)
        : std::runtime_error(what + " (tensor '" + tensor + "')"), tensor_(tensor) {}
    const std::string& tensor() const { return tensor_; }

private:
    std::string tensor_;
};

}  // namespace reimagine
