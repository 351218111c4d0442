#include "memsurf/surface.hpp"

#include <algorithm>

namespace memsurf {

std::string SurfaceConfig::code() const {
    std::string s;
    switch (kernel) {
        case Kernel::kBin: s = "b"; break;
        case Kernel::kLin: s = "l"; break;
        case Kernel::kExp: s = "e"; break;
    }
    s += basis == DecayBasis::kTime ? "ts" : "is";
    return s;
}

SurfaceConfig parse_surface_code(const std::string& code) {
    if (code.size() != 3 || code.substr(2) != "s") {
        throw ConfigError("unknown surface code '" + code + "' (expected e.g. ets, bis)");
    }
    SurfaceConfig cfg;
    switch (code[0]) {
        case 'b': cfg.kernel = Kernel::kBin; break;
        case 'l': cfg.kernel = Kernel::kLin; break;
        case 'e': cfg.kernel = Kernel::kExp; break;
        default: throw ConfigError("unknown kernel in surface code '" + code + "'");
    }
    switch (code[1]) {
        case 't': cfg.basis = DecayBasis::kTime; break;
        case 'i': cfg.basis = DecayBasis::kIndex; break;
        default: throw ConfigError("unknown basis in surface code '" + code + "'");
    }
    return cfg;
}

MemorySurface::MemorySurface(const SurfaceConfig& config) : config_(config) {
    config_.validate();
    const size_t n = static_cast<size_t>(config_.dims.width) * config_.dims.height;
    last_t_.assign(n, 0);
    last_i_.assign(n, -1);
    last_p_.assign(n, 0);
}

void MemorySurface::absorb(const Event& ev) {
    if (ev.x >= config_.dims.width || ev.y >= config_.dims.height) {
        throw DataError("absorb: event at (" + std::to_string(ev.x) + "," + std::to_string(ev.y) +
                        ") outside surface");
    }
    if (ev.t < last_t_absorbed_) {
        throw DataError("absorb: timestamp regression (" + std::to_string(ev.t) + " after " +
                        std::to_string(last_t_absorbed_) + ")");
    }
    if (ev.i <= last_i_absorbed_) {
        throw DataError("absorb: index regression (" + std::to_string(ev.i) + " after " +
                        std::to_string(last_i_absorbed_) + ")");
    }
    const size_t pixel = static_cast<size_t>(ev.y) * config_.dims.width + ev.x;
    if (last_i_[pixel] < 0) {
        populated_.push_back(static_cast<uint32_t>(pixel));
    }
    last_t_[pixel] = ev.t;
    last_i_[pixel] = ev.i;
    last_p_[pixel] = ev.p;
    last_t_absorbed_ = ev.t;
    last_i_absorbed_ = ev.i;
    ++event_count_;
}

std::vector<double> MemorySurface::extract_patch(uint16_t cx, uint16_t cy, int R,
                                                 int64_t now) const {
    if (R < 1 || R % 2 == 0) {
        throw ConfigError("patch side must be odd, got " + std::to_string(R));
    }
    std::vector<double> patch(static_cast<size_t>(R) * R, 0.0);
    const int half = R / 2;
    for (int dy = -half; dy <= half; ++dy) {
        const int y = static_cast<int>(cy) + dy;
        if (y < 0 || y >= config_.dims.height) {
            continue;
        }
        for (int dx = -half; dx <= half; ++dx) {
            const int x = static_cast<int>(cx) + dx;
            if (x < 0 || x >= config_.dims.width) {
                continue;
            }
            patch[static_cast<size_t>(dy + half) * R + (dx + half)] =
                sample_index(static_cast<size_t>(y) * config_.dims.width + x, now);
        }
    }
    return patch;
}

double MemorySurface::total_activation(int64_t now) const {
    double sum = 0.0;
    for (uint32_t pixel : populated_) {
        sum += sample_index(pixel, now);
    }
    return sum;
}

std::vector<double> MemorySurface::to_matrix(int64_t now) const {
    std::vector<double> grid(last_i_.size(), 0.0);
    for (uint32_t pixel : populated_) {
        grid[pixel] = sample_index(pixel, now);
    }
    return grid;
}

std::vector<std::pair<int64_t, double>> activation_series(const Recording& rec,
                                                          const SurfaceConfig& config,
                                                          int64_t stride, bool on_only) {
    if (stride <= 0) {
        throw ConfigError("activation_series stride must be positive");
    }
    std::vector<std::pair<int64_t, double>> series;
    if (rec.events.empty()) {
        return series;
    }
    SurfaceConfig cfg = config;
    cfg.dims = rec.dims;
    MemorySurface surface(cfg);

    if (cfg.basis == DecayBasis::kTime) {
        const int64_t t0 = rec.events.front().t;
        const int64_t span = rec.events.back().t - t0;
        size_t next = 0;
        for (int64_t k = 1; k <= span / stride; ++k) {
            const int64_t instant = t0 + k * stride;
            while (next < rec.events.size() && rec.events[next].t <= instant) {
                if (!on_only || rec.events[next].p > 0) {
                    surface.absorb(rec.events[next]);
                }
                ++next;
            }
            series.emplace_back(instant, surface.total_activation(instant));
        }
    } else {
        // Index instants count positions in the full stream, including any
        // events the polarity filter drops.
        const int64_t n = static_cast<int64_t>(rec.events.size());
        size_t next = 0;
        for (int64_t k = 1; k <= n / stride; ++k) {
            const int64_t instant = k * stride - 1;  // index of the last absorbed event
            while (next < rec.events.size() && rec.events[next].i <= instant) {
                if (!on_only || rec.events[next].p > 0) {
                    surface.absorb(rec.events[next]);
                }
                ++next;
            }
            series.emplace_back(instant, surface.total_activation(instant));
        }
    }
    return series;
}

}  // namespace memsurf
