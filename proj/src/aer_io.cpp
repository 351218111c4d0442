#include "memsurf/aer_io.hpp"

#include <algorithm>
#include <fstream>

namespace memsurf {

namespace {
constexpr int64_t kMaxTimestamp = (int64_t{1} << 23) - 1;
}

void validate_recording(const Recording& rec) {
    int64_t prev_t = -1;
    for (size_t k = 0; k < rec.events.size(); ++k) {
        const Event& ev = rec.events[k];
        if (ev.x >= rec.dims.width || ev.y >= rec.dims.height) {
            throw DataError("event " + std::to_string(k) + " at (" + std::to_string(ev.x) + "," +
                            std::to_string(ev.y) + ") outside sensor " +
                            std::to_string(rec.dims.width) + "x" + std::to_string(rec.dims.height));
        }
        if (ev.t < prev_t) {
            throw DataError("timestamp regression at event " + std::to_string(k));
        }
        if (ev.i != static_cast<int64_t>(k)) {
            throw DataError("non-dense event index at position " + std::to_string(k));
        }
        if (ev.p != 1 && ev.p != -1) {
            throw DataError("polarity outside {-1,+1} at event " + std::to_string(k));
        }
        prev_t = ev.t;
    }
}

Recording decode_events(std::span<const uint8_t> bytes, SensorDims dims, TimestampMode mode) {
    if (bytes.size() % 5 != 0) {
        throw DataError("malformed AER buffer: length " + std::to_string(bytes.size()) +
                        " is not a multiple of 5");
    }
    Recording rec;
    rec.dims = dims;
    rec.events.reserve(bytes.size() / 5);
    int64_t prev_t = -1;
    for (size_t off = 0; off < bytes.size(); off += 5) {
        Event ev;
        ev.x = bytes[off];
        ev.y = bytes[off + 1];
        ev.p = (bytes[off + 2] & 0x80) ? 1 : -1;
        ev.t = (int64_t{bytes[off + 2] & 0x7F} << 16) | (int64_t{bytes[off + 3]} << 8) |
               int64_t{bytes[off + 4]};
        ev.i = static_cast<int64_t>(rec.events.size());
        if (ev.x >= dims.width || ev.y >= dims.height) {
            throw DataError("event coordinate (" + std::to_string(ev.x) + "," +
                            std::to_string(ev.y) + ") out of range at byte offset " +
                            std::to_string(off));
        }
        if (ev.t < prev_t) {
            if (mode == TimestampMode::kReject) {
                throw DataError("non-monotone timestamp at byte offset " + std::to_string(off));
            }
            ev.t = prev_t;
        }
        prev_t = ev.t;
        rec.events.push_back(ev);
    }
    return rec;
}

std::vector<uint8_t> encode_events(const Recording& rec) {
    std::vector<uint8_t> bytes;
    bytes.reserve(rec.events.size() * 5);
    for (const Event& ev : rec.events) {
        if (ev.t < 0 || ev.t > kMaxTimestamp) {
            throw DataError("timestamp " + std::to_string(ev.t) +
                            " does not fit in 23 bits at event " + std::to_string(ev.i));
        }
        if (ev.x > 255 || ev.y > 255) {
            throw DataError("coordinate does not fit in 8 bits at event " + std::to_string(ev.i));
        }
        bytes.push_back(static_cast<uint8_t>(ev.x));
        bytes.push_back(static_cast<uint8_t>(ev.y));
        bytes.push_back(static_cast<uint8_t>(((ev.p > 0) ? 0x80 : 0x00) | ((ev.t >> 16) & 0x7F)));
        bytes.push_back(static_cast<uint8_t>((ev.t >> 8) & 0xFF));
        bytes.push_back(static_cast<uint8_t>(ev.t & 0xFF));
    }
    return bytes;
}

Recording flip_horizontal(const Recording& rec) {
    Recording out = rec;
    for (Event& ev : out.events) {
        ev.x = static_cast<uint16_t>(rec.dims.width - 1 - ev.x);
    }
    return out;
}

Recording read_recording(const std::filesystem::path& path, SensorDims dims, TimestampMode mode) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    try {
        Recording rec = decode_events(bytes, dims, mode);
        rec.meta = path.string();
        return rec;
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_recording(const std::filesystem::path& path, const Recording& rec) {
    const std::vector<uint8_t> bytes = encode_events(rec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

Dataset load_dataset(const std::filesystem::path& root, SensorDims dims, TimestampMode mode) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) {
        throw DataError("dataset root is not a directory: " + root.string());
    }
    Dataset ds;
    ds.dims = dims;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            ds.class_names.push_back(entry.path().filename().string());
        }
    }
    std::sort(ds.class_names.begin(), ds.class_names.end());
    if (ds.class_names.empty()) {
        throw DataError("no class directories under " + root.string());
    }
    for (size_t label = 0; label < ds.class_names.size(); ++label) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(root / ds.class_names[label])) {
            if (entry.path().extension() == ".bin") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            Recording rec = read_recording(file, dims, mode);
            rec.label = static_cast<int>(label);
            rec.meta = ds.class_names[label] + "/" + file.stem().string();
            ds.recordings.push_back(std::move(rec));
        }
    }
    return ds;
}

}  // namespace memsurf
