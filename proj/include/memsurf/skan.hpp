#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "memsurf/surface.hpp"
#include "memsurf/types.hpp"

namespace memsurf {

/// Delay-coded patch: channels that spiked, with integer delay steps 0..255.
/// Channels are stored in ascending order; absent channels carry no spike.
struct SpikePattern {
    struct Spike {
        uint16_t channel;
        uint8_t delay;
    };
    std::vector<Spike> spikes;
    int channel_count = 0;
};

/// Quantizes surface values in [0,1] to q = round(255*v); q = 0 emits no
/// spike, otherwise the channel spikes at delay 255 - q (strongest first).
SpikePattern encode_patch(std::span<const double> patch);

struct SkanConfig {
    int neuron_count = 25;  // K
    int field_size = 13;    // R, odd
    int t_max = 512;        // discrete simulation horizon
    double peak = 1.0;      // kernel peak height h
    int w_min = 2;
    int w_max = 256;
    int delta_w = 1;
    double theta_up = 0.05;
    double theta_init_frac = 0.3;    // theta_init = frac * R^2
    double theta_down_frac = 0.001;  // delta_theta_down = frac * theta_init
    double theta_floor_frac = 0.001; // thresholds never decay below this * theta_init
    uint64_t init_seed = 7;

    int channel_count() const { return field_size * field_size; }
    double theta_init() const { return theta_init_frac * channel_count(); }
    double theta_down() const { return theta_down_frac * theta_init(); }
    double theta_floor() const { return theta_floor_frac * theta_init(); }

    void validate() const;
};

struct StepResult {
    int winner = -1;     // feature id, -1 = no neuron reached threshold
    int fire_step = -1;  // discrete step of the winning spike
};

/// Reusable per-thread simulation buffers for frozen inference.
struct SkanScratch {
    std::vector<double> slope_delta;  // K * (t_max + 2)
    std::vector<double> value;
    std::vector<double> slope;
    std::vector<int> eligible;
};

struct FeatureEvent {
    uint16_t x = 0;
    uint16_t y = 0;
    int64_t t = 0;
    int64_t i = 0;
    int feature_id = 0;

    Event as_event() const { return Event{x, y, t, 1, i}; }
};

/// K neurons with per-channel triangular kernels of adaptive width and
/// adaptive thresholds, competing in the temporal domain. Channel j spiking
/// at delay d drives neuron k with a kernel that rises linearly from step d
/// over w[k][j] steps to the peak, then falls symmetrically. The first
/// neuron whose summed drive reaches its threshold wins (ties: lowest
/// index); the winner suppresses all others for the pattern.
class SkanNetwork {
  public:
    explicit SkanNetwork(const SkanConfig& config);

    /// Presents one pattern. With learning enabled, the winner's kernel
    /// widths step toward aligning each kernel peak with the firing step
    /// and its threshold moves toward the observed soma peak, while every
    /// loser's threshold decays; with no winner all thresholds decay.
    StepResult step(const SpikePattern& pattern);

    /// Frozen inference; thread-safe with a per-thread scratch.
    StepResult infer(const SpikePattern& pattern, SkanScratch& scratch) const;

    void freeze() { learning_ = false; }
    bool learning() const { return learning_; }
    const SkanConfig& config() const { return config_; }
    int width_at(int neuron, int channel) const {
        return widths_[static_cast<size_t>(neuron) * config_.channel_count() + channel];
    }
    const std::vector<uint16_t>& widths() const { return widths_; }
    const std::vector<double>& thresholds() const { return thresholds_; }
    void set_threshold(int neuron, double theta);

    void save(const std::filesystem::path& path) const;
    static SkanNetwork load(const std::filesystem::path& path);

  private:
    StepResult simulate(const SpikePattern& pattern, SkanScratch& scratch,
                        double* winner_soma_max) const;

    SkanConfig config_;
    std::vector<uint16_t> widths_;   // K x R^2
    std::vector<double> thresholds_;
    bool learning_ = true;
    SkanScratch scratch_;
};

/// Streams every event of the (ON-filtered, dense-index) recordings through
/// absorb -> patch -> encode -> step, then disables learning.
void train_features(const std::vector<const Recording*>& recordings,
                    const SurfaceConfig& surface_config, SkanNetwork& network);

/// Frozen per-event inference. The event must already be absorbed into the
/// surface, so the center channel carries a zero-delay spike.
std::optional<FeatureEvent> extract_feature_event(const Event& ev, const MemorySurface& surface,
                                                  const SkanNetwork& network,
                                                  SkanScratch& scratch);

/// Frozen network with kernel widths drawn uniformly in [w_min, w_max].
/// Thresholds start at theta_init; calibrate_thresholds gives each neuron
/// the soma peak it reaches on the mean of the sampled patches, so random
/// feature sets actually fire.
SkanNetwork random_features(int neuron_count, int field_size, uint64_t seed,
                            SkanConfig base = {});

void calibrate_thresholds(SkanNetwork& network, const std::vector<std::vector<double>>& patches);

/// K kernel-width matrices as CSV blocks (feature-set visualization).
void write_feature_grids_csv(const std::filesystem::path& path, const SkanNetwork& network);

}  // namespace memsurf
