#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace varctrl {

/// Invalid problem, grid, or configuration parameters.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure inside a solver (singular system, non-finite values).
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, std::size_t time_index)
        : std::runtime_error(what + " (time index " + std::to_string(time_index) + ")"),
          time_index_(time_index) {}

    [[nodiscard]] std::size_t time_index() const noexcept { return time_index_; }

private:
    std::size_t time_index_;
};

}  // namespace varctrl
