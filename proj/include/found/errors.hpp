#pragma once

#include <stdexcept>
#include <string>

namespace found {

/// Invalid or inconsistent run configuration / preconditions. CLI exit 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor/adapter shape incompatibilities. CLI exit 2.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or gradient during an attack. CLI exit 3.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem failures. CLI exit 4.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Container magic/version/layout mismatches. CLI exit 5.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace found
