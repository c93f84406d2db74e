#pragma once

#include <stdexcept>
#include <string>

namespace modsteer {

// Base for every error the toolkit raises. `kind()` is the stable tag the CLI
// puts into its machine-readable error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string & what)
        : std::runtime_error(what), kind_(std::move(kind)) {}

    const std::string & kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class DatasetError : public Error {
public:
    explicit DatasetError(const std::string & what) : Error("dataset", what) {}
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string & what) : Error("validation", what) {}
};

// Raised when a backend is asked for something it does not advertise in BackendInfo.
class CapabilityError : public Error {
public:
    explicit CapabilityError(const std::string & what) : Error("capability", what) {}
};

class BackendError : public Error {
public:
    explicit BackendError(const std::string & what) : Error("backend", what) {}
};

class ArtifactError : public Error {
public:
    explicit ArtifactError(const std::string & what) : Error("artifact", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string & what) : Error("config", what) {}
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string & what) : Error("parse", what) {}
};

} // namespace modsteer
