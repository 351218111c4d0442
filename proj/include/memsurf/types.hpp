#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace memsurf {

inline constexpr const char* kVersion = "0.1.0";

/// Base class for all library errors.
class Error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameters (CLI exit code 2).
class ConfigError : public Error {
    using Error::Error;
};

/// Malformed or inconsistent data (CLI exit code 3).
class DataError : public Error {
    using Error::Error;
};

/// One camera event: pixel address, microsecond timestamp, polarity and
/// the zero-based global index within its recording.
struct Event {
    uint16_t x = 0;
    uint16_t y = 0;
    int64_t t = 0;  // microseconds
    int8_t p = 1;   // -1 or +1
    int64_t i = 0;
};

struct SensorDims {
    uint16_t width = 304;
    uint16_t height = 240;
    bool operator==(const SensorDims&) const = default;
};

/// Default ATIS sensor resolution.
inline constexpr SensorDims kAtisDims{304, 240};

/// An ordered event stream with sensor geometry, an optional class label
/// and a free-form provenance string (file path or synthetic id).
struct Recording {
    std::vector<Event> events;
    SensorDims dims = kAtisDims;
    int label = -1;  // class id, -1 when unlabelled
    std::string meta;

    int64_t duration_us() const {
        return events.empty() ? 0 : events.back().t - events.front().t;
    }
};

/// Throws DataError unless events are timestamp-monotone with dense indices
/// and all coordinates are inside dims.
void validate_recording(const Recording& rec);

}  // namespace memsurf
