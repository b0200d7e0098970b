#pragma once

#include <stdexcept>
#include <string>

namespace qss {

// Invalid run configuration or parameter combination (CLI exit code 2).
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// Non-finite state, singular system or other numerical failure (CLI exit code 3).
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what, double time = 0.0)
        : std::runtime_error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

// Argument outside the mathematical domain of a function (e.g. the singular origin).
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

}  // namespace qss
