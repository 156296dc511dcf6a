#pragma once

#include <stdexcept>
#include <string>

namespace hqnn {

// Register or dimension outside the supported range.
struct SizeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Qubit, class or sample index outside its valid range.
struct IndexError : std::out_of_range {
    using std::out_of_range::out_of_range;
};

// Mismatched vector lengths between cooperating components.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration or model/configuration combination.
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MissingFileError : DataError {
    using DataError::DataError;
};

struct BadMagicError : DataError {
    using DataError::DataError;
};

struct TruncatedFileError : DataError {
    using DataError::DataError;
};

struct CountMismatchError : DataError {
    using DataError::DataError;
};

struct InsufficientDataError : DataError {
    using DataError::DataError;
};

} // namespace hqnn
