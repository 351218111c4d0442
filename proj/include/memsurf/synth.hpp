#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "memsurf/aer_io.hpp"
#include "memsurf/types.hpp"

namespace memsurf {

/// Rasterized binary silhouette with tight occupied bounds.
struct ShapeMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> grid;  // row-major, 0/1
    int x_lo = 0, x_hi = -1;    // tight occupied bounds
    int y_lo = 0, y_hi = -1;

    bool at(int x, int y) const {
        return x >= 0 && x < width && y >= 0 && y < height &&
               grid[static_cast<size_t>(y) * width + x] != 0;
    }
};

/// Number of built-in silhouette classes.
int shape_class_count();
const std::string& shape_class_name(int cls);

/// Rasterizes a built-in silhouette. wingspan_px is the span of the widest
/// class; the others are proportionally narrower.
ShapeMask rasterize_shape(int cls, double wingspan_px, double rotation_deg);

/// One falling-silhouette recording. The silhouette drops vertically through
/// the frame; contour events fire wherever pixel occupancy flips between
/// 100 us micro-steps.
struct DropSpec {
    int shape_class = 0;
    double center_x = 0;           // horizontal placement of the mask center, px
    std::optional<double> start_y; // top row of the mask at t=0; default: fully above frame
    double velocity = 500;         // px/s downward at t=0
    double acceleration = 0;       // px/s^2
    double scale = 1.0;
    double rotation_deg = 0;
    double noise_rate = 0;         // spurious events/s over the whole frame
    uint64_t seed = 0;
    SensorDims dims{240, 180};
    double wingspan_frac = 0.30;   // widest class wingspan / sensor width
    int64_t start_delay_us = 0;
    int64_t tail_us = 15000;       // extra stream time after the shape exits
    int64_t duration_floor_us = 0; // minimum stream duration (noise-only streams)

    void validate() const;
};

/// Ground truth at 1 ms granularity: visible bounding box (clipped to the
/// frame) and its center. in_view means the full silhouette is inside.
struct TrajectoryPoint {
    int64_t t_ms = 0;
    int x_lo = 0, x_hi = -1, y_lo = 0, y_hi = -1;
    double cx = 0, cy = 0;
    bool visible = false;
    bool in_view = false;
};

struct DropResult {
    Recording recording;
    std::vector<TrajectoryPoint> trajectory;
    bool entered = false;
    int64_t entry_us = -1;
    int64_t exit_us = -1;
    double crossing_ms = 0;
};

DropResult generate_drop(const DropSpec& spec);

/// Applies a strictly increasing microsecond map to every timestamp.
/// Coordinates, polarities, order and indices are unchanged. Throws
/// DataError when the warp inverts or collapses distinct sampled timestamps.
Recording time_warp(const Recording& rec, const std::function<int64_t(int64_t)>& warp);

/// Keeps only p=+1 events and reassigns dense indices; this stream defines
/// the index clock used everywhere downstream.
Recording filter_on_events(const Recording& rec);

struct SynthDatasetOptions {
    int classes = 4;
    int per_class = 25;
    SensorDims dims{240, 180};
    uint64_t seed = 1;
    // Crossing time draw: normal(mean, std) by default, uniform(lo, hi)
    // when sweep is set (velocity-segregation experiments).
    double crossing_ms_mean = 242;
    double crossing_ms_std = 20;
    bool sweep = false;
    double crossing_ms_lo = 160;
    double crossing_ms_hi = 360;
    double acceleration = 1500;
    double noise_rate = 300;
    double scale_lo = 0.85, scale_hi = 1.15;
    double rotation_lo = -10, rotation_hi = 10;
    double wingspan_frac = 0.30;
    int64_t max_start_delay_us = 6000;
    int64_t tail_us = 9000;
};

struct SynthRecordingInfo {
    std::string id;
    int label = 0;
    DropSpec spec;
    std::vector<TrajectoryPoint> trajectory;
    double crossing_ms = 0;
    int64_t entry_us = -1;
    int64_t exit_us = -1;
};

struct SynthDataset {
    Dataset data;
    std::vector<SynthRecordingInfo> info;  // parallel to data.recordings
    SynthDatasetOptions options;
    double mean_event_rate_hz = 0;  // over ON-filtered streams
    int64_t calibrated_n_e = 0;     // round(mean rate x tau_e)
};

/// Deterministic dataset generation; recording k of class c uses seed
/// derive_seed(options.seed, c * per_class + k).
SynthDataset generate_synth_dataset(const SynthDatasetOptions& options);

/// Writes `<class>/<id>.bin` files plus manifest.json with every DropSpec
/// and ground-truth trajectory.
void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& ds);
SynthDataset load_synth_dataset(const std::filesystem::path& manifest_path);

}  // namespace memsurf
