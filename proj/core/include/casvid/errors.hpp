#pragma once

#include <stdexcept>
#include <string>

namespace casvid {

// Error taxonomy mirrored by the CLI exit codes: config -> 2,
// checkpoint -> 3, data -> 4, everything else -> 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

// Shape/precondition violations at module boundaries.
struct DimError : Error {
    using Error::Error;
};

struct UsageError : Error {
    using Error::Error;
};

struct TrainingError : Error {
    using Error::Error;
};

}  // namespace casvid
