#include "memsurf/pooling.hpp"

#include <algorithm>
#include <cmath>

namespace memsurf {

std::vector<double> resample_linear(std::span<const double> v, int m) {
    if (v.empty()) {
        throw ConfigError("resample_linear: empty input");
    }
    if (m < 1) {
        throw ConfigError("resample_linear: target length must be >= 1");
    }
    std::vector<double> out(static_cast<size_t>(m));
    const size_t n = v.size();
    if (n == 1 || m == 1) {
        std::fill(out.begin(), out.end(), v[0]);
        return out;
    }
    const double step = static_cast<double>(n - 1) / (m - 1);
    for (int k = 0; k < m; ++k) {
        const double pos = k * step;
        const size_t lo = std::min(static_cast<size_t>(pos), n - 2);
        const double frac = pos - static_cast<double>(lo);
        out[static_cast<size_t>(k)] = v[lo] + frac * (v[lo + 1] - v[lo]);
    }
    out[static_cast<size_t>(m) - 1] = v[n - 1];  // exact endpoint
    return out;
}

PooledProjections pool_projections(const MemorySurface& surface, const BBox& box, int64_t now) {
    if (box.x_hi < box.x_lo || box.y_hi < box.y_lo) {
        throw ConfigError("pool_projections: empty box");
    }
    PooledProjections out;
    out.rows.assign(static_cast<size_t>(box.y_hi - box.y_lo + 1), 0.0);
    out.cols.assign(static_cast<size_t>(box.x_hi - box.x_lo + 1), 0.0);
    const int width = surface.width();
    for (uint32_t pixel : surface.populated()) {
        const int x = static_cast<int>(pixel % width);
        const int y = static_cast<int>(pixel / width);
        if (x < box.x_lo || x > box.x_hi || y < box.y_lo || y > box.y_hi) {
            continue;
        }
        const double v = surface.sample_index(pixel, now);
        out.rows[static_cast<size_t>(y - box.y_lo)] += v;
        out.cols[static_cast<size_t>(x - box.x_lo)] += v;
    }
    return out;
}

std::vector<float> pool_frame(std::span<const MemorySurface* const> surfaces, const BBox& box,
                              int64_t now, const PoolConfig& config) {
    config.validate();
    if (surfaces.empty()) {
        throw ConfigError("pool_frame: no surfaces");
    }
    std::vector<float> frame;
    frame.reserve(static_cast<size_t>(config.resample_len) * 2 * surfaces.size());
    for (const MemorySurface* surface : surfaces) {
        const PooledProjections proj = pool_projections(*surface, box, now);
        for (double v : resample_linear(proj.rows, config.resample_len)) {
            frame.push_back(static_cast<float>(v));
        }
        for (double v : resample_linear(proj.cols, config.resample_len)) {
            frame.push_back(static_cast<float>(v));
        }
    }
    if (config.max_normalize) {
        float peak = 0.0f;
        for (float v : frame) {
            peak = std::max(peak, v);
        }
        if (peak > 0.0f) {
            for (float& v : frame) {
                v /= peak;
            }
        }
    }
    return frame;
}

}  // namespace memsurf
