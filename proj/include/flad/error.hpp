#pragma once

#include <stdexcept>
#include <string>

namespace flad {

// Base for every error raised by the library. Subclasses let callers
// distinguish contract violations without parsing messages.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class InvalidLabelError : public Error {
public:
    using Error::Error;
};

class EmptyDataError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class InvalidSpecError : public Error {
public:
    using Error::Error;
};

class InfeasiblePartitionError : public Error {
public:
    using Error::Error;
};

class UndefinedRocError : public Error {
public:
    using Error::Error;
};

// IDX parse failures; `field` names the header entry or section at fault.
class ParseError : public Error {
public:
    ParseError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

// Configuration errors carry the dotted path of the offending field
// (e.g. "federation.N") or a line number for syntax errors.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace flad
