#pragma once

#include <stdexcept>
#include <string>

namespace dumlab {

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("ShapeError: " + msg) {}
};

struct BroadcastError : std::runtime_error {
    explicit BroadcastError(const std::string& msg) : std::runtime_error("BroadcastError: " + msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("DomainError: " + msg) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error("NumericalError: " + msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("FormatError: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("ConfigError: " + msg) {}
};

}  // namespace dumlab
