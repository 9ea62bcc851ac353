#pragma once

#include <stdexcept>
#include <string>

namespace sits {

// Base of everything the library throws on bad input; the CLI maps
// ConfigError to a usage failure and the rest to data/format failures.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct InputError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

} // namespace sits
