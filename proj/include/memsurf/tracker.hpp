#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "memsurf/surface.hpp"
#include "memsurf/types.hpp"

namespace memsurf {

struct TrackerConfig {
    int smoothing_window = 8;
    double threshold = 0.1;          // on the max-normalized profile
    int64_t sample_interval_us = 3000;

    void validate() const {
        if (smoothing_window < 1) {
            throw ConfigError("smoothing window must be >= 1");
        }
        if (threshold <= 0 || threshold >= 1) {
            throw ConfigError("threshold must be in (0, 1)");
        }
        if (sample_interval_us <= 0) {
            throw ConfigError("sample interval must be positive");
        }
    }
};

struct BBox {
    int x_lo = 0, x_hi = -1, y_lo = 0, y_hi = -1;
};

struct TrackState {
    int64_t t_us = 0;
    bool valid = false;  // both axis detections succeeded
    BBox bbox;
    double mid_x = 0, mid_y = 0;
    double activation = 0;  // total surface activation at the sample instant
};

enum class Axis { kRows, kColumns };

/// Raw per-row and per-column sums of sample_value over populated pixels,
/// in one sweep, plus their total.
struct SurfaceProfiles {
    std::vector<double> rows, cols;
    double total = 0;
};

SurfaceProfiles project_profiles(const MemorySurface& surface, int64_t now);

/// In-place box moving average over taps [i-(w-1)/2, i+w/2] (shrinking at
/// the borders) followed by division by the vector max. An all-zero vector
/// stays all-zero.
void smooth_normalize(std::vector<double>& profile, int window);

/// Per-row (or per-column) sums of sample_value, box-smoothed and normalized
/// by the vector max.
std::vector<double> project_and_smooth(const MemorySurface& surface, Axis axis, int64_t now,
                                       int window);

struct Bounds {
    int lo = 0, hi = 0;  // inclusive
};

/// Extent of the largest contiguous run of samples >= threshold; first run
/// wins ties. nullopt when nothing clears the threshold.
std::optional<Bounds> detect_bounds(const std::vector<double>& profile, double threshold);

/// Absorbs ON events in order and emits one TrackState per sample interval
/// across the recording span: floor(span / interval) frames.
std::vector<TrackState> track(const Recording& rec, const SurfaceConfig& surface_config,
                              const TrackerConfig& tracker_config);

/// Vertical velocity (px/s): central difference of the valid-midpoint
/// frames bracketing the temporal midpoint of [span_t0, span_t1]. The
/// bracket frames are the nearest valid ones at least half_bracket_us away
/// on each side; integer box bounds make adjacent-frame differences too
/// quantized to be useful. Throws DataError when no bracketing pair exists.
double midpoint_velocity(const std::vector<TrackState>& states, int64_t span_t0, int64_t span_t1,
                         int64_t half_bracket_us = 15000);

/// Least-squares slope of (midpoint velocity, mean rate of change of total
/// activation over the early detection window) per class.
struct VelocityActivationFit {
    std::vector<double> slope_per_class;
    std::vector<int> samples_per_class;
};

VelocityActivationFit activation_velocity_fit(const std::vector<const Recording*>& recordings,
                                              const std::vector<int>& labels, int classes,
                                              const SurfaceConfig& surface_config,
                                              const TrackerConfig& tracker_config,
                                              int64_t early_window_us = 50000);

void write_track_csv(const std::filesystem::path& path, const std::string& recording_id,
                     const std::vector<TrackState>& states);

}  // namespace memsurf
