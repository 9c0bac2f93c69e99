#pragma once

#include <stdexcept>
#include <string>

namespace thp {

// Bad user input: malformed config files, unknown options, invalid CLI args.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset validation failures: malformed lines, non-increasing times, bad indices.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failures: non-finite values, diverged training, failed quadrature.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or argument contract violations inside the tensor engine.
struct ShapeError : std::invalid_argument {
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

}  // namespace thp
