#pragma once

#include <stdexcept>
#include <string>

namespace fdia {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text (network file, trace CSV, config).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Singular systems, non-finite losses, divergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Wraps a failure with the pipeline stage it came from ("simulate", "train", ...).
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

}  // namespace fdia
