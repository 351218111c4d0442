#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "memsurf/types.hpp"

namespace memsurf {

/// How to treat a decoded stream whose timestamps go backwards.
enum class TimestampMode {
    kReject,  // throw DataError (default)
    kClamp,   // t_i := max(t_i, t_{i-1})
};

/// Decodes a 5-bytes-per-event AER buffer. Word layout: byte0 = x,
/// byte1 = y, byte2 bit 7 = polarity (1 -> +1), the remaining 23 bits
/// (byte2 bits 6..0, byte3, byte4, big-endian) = timestamp in us.
/// Indices are assigned densely in file order.
Recording decode_events(std::span<const uint8_t> bytes, SensorDims dims,
                        TimestampMode mode = TimestampMode::kReject);

/// Exact inverse of decode_events. Throws DataError if a timestamp does not
/// fit in 23 bits or a coordinate does not fit in 8 bits.
std::vector<uint8_t> encode_events(const Recording& rec);

/// Reflects every event left-right: x := width - 1 - x. Timestamps, order,
/// indices and label are unchanged.
Recording flip_horizontal(const Recording& rec);

Recording read_recording(const std::filesystem::path& path, SensorDims dims,
                         TimestampMode mode = TimestampMode::kReject);
void write_recording(const std::filesystem::path& path, const Recording& rec);

/// A dataset is a directory of `<class_name>/<recording_id>.bin` files.
/// Class names are sorted lexicographically and mapped to label ids 0..C-1.
struct Dataset {
    std::vector<Recording> recordings;
    std::vector<std::string> class_names;
    SensorDims dims;

    size_t class_count() const { return class_names.size(); }
};

Dataset load_dataset(const std::filesystem::path& root, SensorDims dims,
                     TimestampMode mode = TimestampMode::kReject);

}  // namespace memsurf
