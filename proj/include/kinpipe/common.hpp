#pragma once

#include <stdexcept>
#include <string>

namespace kinpipe {

// Error taxonomy used across the pipeline. Every recoverable failure maps to
// one of these so callers (and the CLI) can distinguish bad configuration
// from bad data.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed input file (bad row, empty trial, truncated container).
struct ParseError : Error {
    using Error::Error;
};

// Input violates the data model (unknown label code, bad enum value).
struct SchemaError : Error {
    using Error::Error;
};

// Invalid argument to an operation (cutoff above Nyquist, empty list, ...).
struct ParamError : Error {
    using Error::Error;
};

// Trial cannot be used at all (every marker fully occluded).
struct UnusableTrialError : Error {
    using Error::Error;
};

// Velocity profile does not expose the three expected phases.
struct SegmentationError : Error {
    using Error::Error;
};

// Sequence longer than the padded layout allows.
struct SequenceOverflowError : Error {
    using Error::Error;
};

// Training produced a non-finite loss.
struct DivergenceError : Error {
    using Error::Error;
};

// Statistic undefined on this data (e.g. all values identical).
struct DegenerateDataError : Error {
    using Error::Error;
};

// File system level failure.
struct IoError : Error {
    using Error::Error;
};

}  // namespace kinpipe
