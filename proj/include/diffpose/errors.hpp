#pragma once

#include <stdexcept>
#include <string>

namespace diffpose {

// All failures surface as typed exceptions so callers can map them onto
// exit codes / error lines without string matching.

// Bad configuration value, unknown config key, or inconsistent settings.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/keypoint shape mismatch.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Scalar argument outside its documented domain (timesteps, counts, ...).
struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or a division that would be degenerate.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file contents (JSON, PGM, checkpoint blobs).
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Degenerate or out-of-frame crop request.
struct CropError : std::runtime_error {
    explicit CropError(const std::string& msg) : std::runtime_error(msg) {}
};

// Synthetic scene parameters that cannot produce a valid clip.
struct GenerationError : std::runtime_error {
    explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem problems (missing file, failed write).
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace diffpose
