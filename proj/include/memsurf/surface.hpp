#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "memsurf/types.hpp"

namespace memsurf {

/// What drives kernel decay: wall-clock time or position in the event stream.
enum class DecayBasis { kTime, kIndex };

enum class Kernel { kBin, kLin, kExp };

/// Decay profile at non-negative age. All three kernels integrate to c over
/// their support: BIN is 1 on [0, c], LIN falls linearly to 0 over [0, 2c],
/// EXP decays with constant c on [0, inf).
inline double kernel_value(Kernel kernel, double age, double c) {
    switch (kernel) {
        case Kernel::kBin:
            return age <= c ? 1.0 : 0.0;
        case Kernel::kLin:
            return age >= 2.0 * c ? 0.0 : 1.0 - age / (2.0 * c);
        case Kernel::kExp:
            return std::exp(-age / c);
    }
    return 0.0;
}

struct SurfaceConfig {
    DecayBasis basis = DecayBasis::kTime;
    Kernel kernel = Kernel::kExp;
    int64_t tau_e = 3000;  // time constant, us
    int64_t n_e = 554;     // index constant, events
    SensorDims dims = kAtisDims;

    /// Kernel constant for the active basis.
    int64_t constant() const { return basis == DecayBasis::kTime ? tau_e : n_e; }

    void validate() const {
        if (tau_e <= 0 || n_e <= 0) {
            throw ConfigError("surface constants must be positive");
        }
        if (dims.width == 0 || dims.height == 0) {
            throw ConfigError("surface dims must be non-empty");
        }
    }

    /// Short code such as "ets" or "bis" (kernel initial + basis initial + s).
    std::string code() const;
};

SurfaceConfig parse_surface_code(const std::string& code);

/// Per-pixel store of the most recent event, materialized into decayed values
/// lazily at query time. Absorption is O(1); a pixel's value is a pure
/// function of its last event, the query instant and the config.
///
/// The query instant `now` is microseconds for the TIME basis and a global
/// event-stream index for the INDEX basis.
class MemorySurface {
  public:
    explicit MemorySurface(const SurfaceConfig& config);

    /// Overwrites the pixel's last-event record. Events must arrive with
    /// non-decreasing timestamps and strictly increasing indices; indices
    /// need not be dense, so surfaces fed from a filtered stream (for
    /// example per-feature event streams) keep the source stream's clock.
    void absorb(const Event& ev);

    double sample_value(uint16_t x, uint16_t y, int64_t now) const {
        return sample_index(static_cast<size_t>(y) * config_.dims.width + x, now);
    }

    /// R x R window of sample_value centered at (cx, cy); out-of-frame cells
    /// are 0. R must be odd. Row-major.
    std::vector<double> extract_patch(uint16_t cx, uint16_t cy, int R, int64_t now) const;

    /// Sum of sample_value over every populated pixel.
    double total_activation(int64_t now) const;

    /// Dense height x width value grid (row-major) at the query instant.
    std::vector<double> to_matrix(int64_t now) const;

    const SurfaceConfig& config() const { return config_; }
    uint16_t width() const { return config_.dims.width; }
    uint16_t height() const { return config_.dims.height; }
    int64_t event_count() const { return event_count_; }
    int64_t last_absorbed_t() const { return last_t_absorbed_; }
    int64_t last_absorbed_i() const { return last_i_absorbed_; }

    /// Pixels in first-touch order; x = p % width, y = p / width.
    const std::vector<uint32_t>& populated() const { return populated_; }

    double sample_index(size_t pixel, int64_t now) const {
        const int64_t last = last_i_[pixel];
        if (last < 0) {
            return 0.0;
        }
        const int64_t ref = config_.basis == DecayBasis::kTime ? last_t_[pixel] : last;
        const int64_t age = now - ref;
        if (age < 0) {
            throw Error("negative age at pixel " + std::to_string(pixel) + ": query instant " +
                        std::to_string(now) + " precedes last event " + std::to_string(ref));
        }
        return static_cast<double>(last_p_[pixel]) *
               kernel_value(config_.kernel, static_cast<double>(age),
                            static_cast<double>(config_.constant()));
    }

  private:
    SurfaceConfig config_;
    std::vector<int64_t> last_t_;
    std::vector<int64_t> last_i_;  // -1 marks an unpopulated pixel
    std::vector<int8_t> last_p_;
    std::vector<uint32_t> populated_;
    int64_t event_count_ = 0;
    int64_t last_t_absorbed_ = -1;
    int64_t last_i_absorbed_ = -1;
};

/// Total activation sampled every `stride` (us for TIME, events for INDEX)
/// over the recording span. Only p=+1 events are absorbed when on_only.
std::vector<std::pair<int64_t, double>> activation_series(const Recording& rec,
                                                          const SurfaceConfig& config,
                                                          int64_t stride, bool on_only = true);

}  // namespace memsurf
