#pragma once

#include <stdexcept>
#include <string>

namespace gil {

// Tensor or parameter shapes disagree.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A documented precondition was broken by the caller (stale tape, bad id, ...).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

// Invalid experiment configuration or command-line input.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    IoError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace gil
