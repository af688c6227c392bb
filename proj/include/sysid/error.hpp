#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sysid {

/// Base class for all library errors.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions; `block()` names the offending parameter block or argument.
class DimensionError : public Error
{
public:
    DimensionError(std::string block, const std::string& what)
        : Error(block + ": " + what), block_(std::move(block))
    {}
    const std::string& block() const noexcept { return block_; }

private:
    std::string block_;
};

/// Invalid configuration value or malformed input.
class ConfigError : public Error
{
public:
    using Error::Error;
};

/// Non-finite value or singular matrix met at a given time step.
class NumericalError : public Error
{
public:
    NumericalError(std::size_t step, const std::string& what)
        : Error(what + " at step " + std::to_string(step)), step_(step)
    {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// File could not be read, written or parsed; `line()` is 0 when not applicable.
class IoError : public Error
{
public:
    IoError(const std::string& what, std::size_t line = 0)
        : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line)
    {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace sysid
