#pragma once

#include <stdexcept>
#include <string>

namespace gcap {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shapes do not conform (messages name both shapes).
struct ShapeError : Error {
    using Error::Error;
};

// Unknown label, unknown token, or an index outside a vocabulary/table.
struct VocabError : Error {
    using Error::Error;
};

// Invalid configuration value (dropout rate, widths, flags).
struct ConfigError : Error {
    using Error::Error;
};

// Semantically invalid or empty data (records, splits, score maps).
struct DataError : Error {
    using Error::Error;
};

// Malformed file content; messages carry line numbers where known.
struct ParseError : Error {
    using Error::Error;
};

// Binary/artifact format violations (magic, version, truncation).
struct FormatError : Error {
    using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace gcap
