#pragma once

#include <stdexcept>
#include <string>

namespace mtsr {

// Error taxonomy mirrors the CLI exit-code contract:
// usage/precondition problems derive from invalid_input, file problems
// from io_error, solver blow-ups from numeric_error.
struct invalid_input : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct parse_error : invalid_input {
    parse_error(const std::string& path, std::size_t line, const std::string& what)
        : invalid_input(path + ":" + std::to_string(line) + ": " + what) {}
};

struct alignment_error : invalid_input {
    using invalid_input::invalid_input;
};

struct dimension_error : invalid_input {
    using invalid_input::invalid_input;
};

struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct numeric_error : std::runtime_error {
    numeric_error(const std::string& what, int iteration)
        : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration(iteration) {}
    int iteration;
};

}  // namespace mtsr
