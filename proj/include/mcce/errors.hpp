#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcce {

/// Base class for every error raised by the engine.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidScore : public Error {
    using Error::Error;
};
class DimensionMismatch : public Error {
    using Error::Error;
};
class InsufficientHistory : public Error {
    using Error::Error;
};
class InsufficientCandidates : public Error {
    using Error::Error;
};
class ScorerUnavailable : public Error {
    using Error::Error;
};
class ProposerUnavailable : public Error {
    using Error::Error;
};
class CapabilityError : public Error {
    using Error::Error;
};
class UpdateFailed : public Error {
    using Error::Error;
};
class InitFailed : public Error {
    using Error::Error;
};
class ConfigError : public Error {
    using Error::Error;
};
class StoreError : public Error {
    using Error::Error;
};
class IoError : public Error {
    using Error::Error;
};

/// Raised while reading line-delimited files; carries the 1-based line number.
class LogParseError : public Error {
public:
    LogParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace mcce
