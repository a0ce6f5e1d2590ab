#ifndef QRATCHET_ERRORS_HPP
#define QRATCHET_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace qratchet {

// Exit-code classes used by the CLI: config = 2, numerical = 3, io = 4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Invalid dimensions, mismatched Hilbert spaces, out-of-range sites.
class DimensionError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class SpaceMismatchError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// Requested truncation cannot hold the state; carries the tail weight.
class TruncationError : public ConfigError {
public:
    TruncationError(const std::string& msg, double tail_weight)
        : ConfigError(msg), tail_weight(tail_weight) {}
    double tail_weight;
};

class ConvergenceError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// Steady-state manifold has more than one dimension and no initial
// condition was supplied to project.
class MultiplicityError : public NumericalError {
public:
    MultiplicityError(const std::string& msg, int null_dimension)
        : NumericalError(msg), null_dimension(null_dimension) {}
    int null_dimension;
};

}  // namespace qratchet

#endif
