#pragma once

#include <stdexcept>
#include <string>

namespace arcade {

// Invalid arguments, malformed configuration or data.
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents; carries a 1-based line number when known.
struct ParseError : InputError {
    ParseError(const std::string& msg, std::size_t line_no)
        : InputError(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    std::size_t line;
};

// Non-finite values encountered during computation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint incompatible with the requested model/config.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

// File system failures.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace arcade
