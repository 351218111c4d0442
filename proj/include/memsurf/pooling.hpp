#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "memsurf/surface.hpp"
#include "memsurf/tracker.hpp"
#include "memsurf/types.hpp"

namespace memsurf {

struct PoolConfig {
    int resample_len = 72;
    int64_t sample_interval_us = 3000;
    bool max_normalize = true;  // per-frame division by the vector max

    void validate() const {
        if (resample_len < 2) {
            throw ConfigError("resample length must be >= 2");
        }
    }
};

/// Samples v at m positions uniformly spanning [0, n-1], linearly
/// interpolating between neighbors. Endpoints are preserved and the output
/// never overshoots the input range. n = 1 yields a constant vector.
std::vector<double> resample_linear(std::span<const double> v, int m);

/// Raw row/column sums of sample_value inside the box (before resampling).
struct PooledProjections {
    std::vector<double> rows;  // length = box height
    std::vector<double> cols;  // length = box width
};

PooledProjections pool_projections(const MemorySurface& surface, const BBox& box, int64_t now);

/// Fixed-length frame vector: per surface, box row sums and column sums
/// each resampled to resample_len, concatenated in surface order
/// (surface 0 rows, surface 0 cols, surface 1 rows, ...), then normalized
/// by the vector max when configured. Length = resample_len * 2 * surfaces.
std::vector<float> pool_frame(std::span<const MemorySurface* const> surfaces, const BBox& box,
                              int64_t now, const PoolConfig& config);

struct FeatureFrame {
    std::vector<float> values;
    int label = -1;
    int recording_index = -1;
    int frame_index = -1;  // position among the recording's valid frames
    int64_t t_us = 0;
};

}  // namespace memsurf
