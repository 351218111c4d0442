#include "memsurf/skan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "memsurf/util.hpp"

namespace memsurf {

using json = nlohmann::json;

SpikePattern encode_patch(std::span<const double> patch) {
    SpikePattern pattern;
    pattern.channel_count = static_cast<int>(patch.size());
    for (size_t ch = 0; ch < patch.size(); ++ch) {
        const double v = patch[ch];
        if (v < 0.0 || v > 1.0) {
            throw Error("encode_patch: value " + std::to_string(v) + " outside [0,1] at channel " +
                        std::to_string(ch));
        }
        const int q = static_cast<int>(std::llround(255.0 * v));
        if (q == 0) {
            continue;
        }
        pattern.spikes.push_back({static_cast<uint16_t>(ch), static_cast<uint8_t>(255 - q)});
    }
    return pattern;
}

void SkanConfig::validate() const {
    if (neuron_count < 1) {
        throw ConfigError("neuron count must be >= 1");
    }
    if (field_size < 1 || field_size % 2 == 0) {
        throw ConfigError("receptive field size must be odd");
    }
    if (w_min < 1 || w_max < w_min || delta_w < 1) {
        throw ConfigError("kernel width bounds out of range");
    }
    if (t_max < 2 || peak <= 0 || theta_up <= 0 || theta_init_frac <= 0 || theta_down_frac <= 0) {
        throw ConfigError("skan parameters out of range");
    }
}

SkanNetwork::SkanNetwork(const SkanConfig& config) : config_(config) {
    config_.validate();
    const size_t n = static_cast<size_t>(config_.neuron_count) * config_.channel_count();
    widths_.resize(n);
    Rng rng(config_.init_seed);
    for (uint16_t& w : widths_) {
        w = static_cast<uint16_t>(
            config_.w_min + rng.below(static_cast<uint64_t>(config_.w_max - config_.w_min + 1)));
    }
    thresholds_.assign(static_cast<size_t>(config_.neuron_count), config_.theta_init());
}

void SkanNetwork::set_threshold(int neuron, double theta) {
    if (theta <= 0) {
        throw ConfigError("threshold must stay positive");
    }
    thresholds_[static_cast<size_t>(neuron)] = theta;
}

StepResult SkanNetwork::simulate(const SpikePattern& pattern, SkanScratch& scratch,
                                 double* winner_soma_max) const {
    if (pattern.spikes.empty()) {
        throw Error("skan step: empty spike pattern");
    }
    const int K = config_.neuron_count;
    const int horizon = config_.t_max;
    const size_t lanes = static_cast<size_t>(horizon) + 2;
    // Lanes start zeroed and are re-zeroed entry-by-entry after each pattern,
    // so only a resize ever needs a full clear.
    if (scratch.slope_delta.size() != static_cast<size_t>(K) * lanes) {
        scratch.slope_delta.assign(static_cast<size_t>(K) * lanes, 0.0);
    }
    scratch.value.assign(static_cast<size_t>(K), 0.0);
    scratch.slope.assign(static_cast<size_t>(K), 0.0);
    scratch.eligible.clear();

    // A neuron whose threshold exceeds the pattern's peak drive can never
    // fire; skipping it keeps sparse patterns cheap.
    const double reach = static_cast<double>(pattern.spikes.size()) * config_.peak;
    for (int k = 0; k < K; ++k) {
        if (thresholds_[static_cast<size_t>(k)] <= reach) {
            scratch.eligible.push_back(k);
        }
    }

    StepResult result;
    if (!scratch.eligible.empty()) {
        for (const int k : scratch.eligible) {
            double* lane = scratch.slope_delta.data() + static_cast<size_t>(k) * lanes;
            const uint16_t* row = widths_.data() + static_cast<size_t>(k) * config_.channel_count();
            for (const auto& spike : pattern.spikes) {
                const int w = row[spike.channel];
                const double ramp = config_.peak / w;
                const int start = spike.delay;
                if (start <= horizon) {
                    lane[start] += ramp;
                }
                if (start + w <= horizon) {
                    lane[start + w] -= 2.0 * ramp;
                }
                if (start + 2 * w <= horizon) {
                    lane[start + 2 * w] += ramp;
                }
            }
        }
        for (int t = 1; t <= horizon && result.winner < 0; ++t) {
            for (const int k : scratch.eligible) {
                const double* lane = scratch.slope_delta.data() + static_cast<size_t>(k) * lanes;
                scratch.slope[static_cast<size_t>(k)] += lane[t - 1];
                scratch.value[static_cast<size_t>(k)] += scratch.slope[static_cast<size_t>(k)];
            }
            for (const int k : scratch.eligible) {
                if (scratch.value[static_cast<size_t>(k)] >= thresholds_[static_cast<size_t>(k)]) {
                    result.winner = k;
                    result.fire_step = t;
                    break;
                }
            }
        }
        if (result.winner >= 0 && winner_soma_max) {
            // Full-horizon soma peak of the winner, for the threshold update.
            const double* lane =
                scratch.slope_delta.data() + static_cast<size_t>(result.winner) * lanes;
            double value = 0, slope = 0, peak = 0;
            for (int t = 1; t <= horizon; ++t) {
                slope += lane[t - 1];
                value += slope;
                peak = std::max(peak, value);
            }
            *winner_soma_max = peak;
        }
        for (const int k : scratch.eligible) {
            double* lane = scratch.slope_delta.data() + static_cast<size_t>(k) * lanes;
            const uint16_t* row = widths_.data() + static_cast<size_t>(k) * config_.channel_count();
            for (const auto& spike : pattern.spikes) {
                const int w = row[spike.channel];
                const int start = spike.delay;
                if (start <= horizon) {
                    lane[start] = 0.0;
                }
                if (start + w <= horizon) {
                    lane[start + w] = 0.0;
                }
                if (start + 2 * w <= horizon) {
                    lane[start + 2 * w] = 0.0;
                }
            }
        }
    }
    return result;
}

StepResult SkanNetwork::infer(const SpikePattern& pattern, SkanScratch& scratch) const {
    return simulate(pattern, scratch, nullptr);
}

StepResult SkanNetwork::step(const SpikePattern& pattern) {
    double soma_max = 0;
    const StepResult result =
        simulate(pattern, scratch_, learning_ ? &soma_max : nullptr);
    if (!learning_) {
        return result;
    }
    const double floor = config_.theta_floor();
    if (result.winner < 0) {
        for (double& theta : thresholds_) {
            theta = std::max(theta - config_.theta_down(), floor);
        }
        return result;
    }
    uint16_t* row =
        widths_.data() + static_cast<size_t>(result.winner) * config_.channel_count();
    for (const auto& spike : pattern.spikes) {
        const int target = result.fire_step - spike.delay;
        const int w = row[spike.channel];
        if (target > w) {
            row[spike.channel] =
                static_cast<uint16_t>(std::min(w + config_.delta_w, config_.w_max));
        } else if (target < w) {
            row[spike.channel] =
                static_cast<uint16_t>(std::max(w - config_.delta_w, config_.w_min));
        }
    }
    for (int k = 0; k < config_.neuron_count; ++k) {
        double& theta = thresholds_[static_cast<size_t>(k)];
        if (k == result.winner) {
            theta += config_.theta_up * (soma_max - theta);
            theta = std::max(theta, floor);
        } else {
            theta = std::max(theta - config_.theta_down(), floor);
        }
    }
    return result;
}

void train_features(const std::vector<const Recording*>& recordings,
                    const SurfaceConfig& surface_config, SkanNetwork& network) {
    if (!network.learning()) {
        throw ConfigError("train_features requires a learning-enabled network");
    }
    const int R = network.config().field_size;
    for (const Recording* rec : recordings) {
        SurfaceConfig cfg = surface_config;
        cfg.dims = rec->dims;
        MemorySurface surface(cfg);
        for (const Event& ev : rec->events) {
            surface.absorb(ev);
            const int64_t now = cfg.basis == DecayBasis::kTime ? ev.t : ev.i;
            const SpikePattern pattern = encode_patch(surface.extract_patch(ev.x, ev.y, R, now));
            network.step(pattern);
        }
    }
    network.freeze();
}

std::optional<FeatureEvent> extract_feature_event(const Event& ev, const MemorySurface& surface,
                                                  const SkanNetwork& network,
                                                  SkanScratch& scratch) {
    if (network.learning()) {
        throw ConfigError("extract_feature_event requires a frozen network");
    }
    const int64_t now = surface.config().basis == DecayBasis::kTime ? ev.t : ev.i;
    const SpikePattern pattern =
        encode_patch(surface.extract_patch(ev.x, ev.y, network.config().field_size, now));
    const StepResult result = network.infer(pattern, scratch);
    if (result.winner < 0) {
        return std::nullopt;
    }
    return FeatureEvent{ev.x, ev.y, ev.t, ev.i, result.winner};
}

SkanNetwork random_features(int neuron_count, int field_size, uint64_t seed, SkanConfig base) {
    base.neuron_count = neuron_count;
    base.field_size = field_size;
    base.init_seed = seed;
    SkanNetwork network(base);
    network.freeze();
    return network;
}

void calibrate_thresholds(SkanNetwork& network, const std::vector<std::vector<double>>& patches) {
    if (patches.empty()) {
        return;
    }
    const size_t channels = static_cast<size_t>(network.config().channel_count());
    std::vector<double> mean(channels, 0.0);
    for (const auto& patch : patches) {
        if (patch.size() != channels) {
            throw ConfigError("calibration patch size mismatch");
        }
        for (size_t ch = 0; ch < channels; ++ch) {
            mean[ch] += patch[ch];
        }
    }
    for (double& v : mean) {
        // The mean of values in [0,1] can creep past 1 by accumulation error.
        v = std::clamp(v / static_cast<double>(patches.size()), 0.0, 1.0);
    }
    const SpikePattern pattern = encode_patch(mean);
    if (pattern.spikes.empty()) {
        return;
    }
    // Soma peak of each neuron on the mean pattern = the threshold at which
    // the neuron just fires on it.
    const SkanConfig& cfg = network.config();
    const int horizon = cfg.t_max;
    for (int k = 0; k < cfg.neuron_count; ++k) {
        std::vector<double> lane(static_cast<size_t>(horizon) + 2, 0.0);
        for (const auto& spike : pattern.spikes) {
            const int w = network.width_at(k, spike.channel);
            const double ramp = cfg.peak / w;
            if (spike.delay <= horizon) {
                lane[spike.delay] += ramp;
            }
            if (spike.delay + w <= horizon) {
                lane[spike.delay + w] -= 2.0 * ramp;
            }
            if (spike.delay + 2 * w <= horizon) {
                lane[spike.delay + 2 * w] += ramp;
            }
        }
        double value = 0, slope = 0, peak = 0;
        for (int t = 1; t <= horizon; ++t) {
            slope += lane[t - 1];
            value += slope;
            peak = std::max(peak, value);
        }
        network.set_threshold(k, std::max(peak, cfg.theta_floor()));
    }
}

void SkanNetwork::save(const std::filesystem::path& path) const {
    json j;
    j["format"] = "memsurf-skan";
    j["version"] = 1;
    j["config"] = {{"neuron_count", config_.neuron_count},
                   {"field_size", config_.field_size},
                   {"t_max", config_.t_max},
                   {"peak", config_.peak},
                   {"w_min", config_.w_min},
                   {"w_max", config_.w_max},
                   {"delta_w", config_.delta_w},
                   {"theta_up", config_.theta_up},
                   {"theta_init_frac", config_.theta_init_frac},
                   {"theta_down_frac", config_.theta_down_frac},
                   {"theta_floor_frac", config_.theta_floor_frac},
                   {"init_seed", config_.init_seed}};
    j["widths"] = widths_;
    j["thresholds"] = thresholds_;
    j["learning"] = learning_;
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << j.dump(1) << "\n";
}

SkanNetwork SkanNetwork::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed network file: " + std::string(e.what()));
    }
    if (j.value("format", "") != "memsurf-skan") {
        throw DataError("not a memsurf network file: " + path.string());
    }
    SkanConfig cfg;
    const json& c = j.at("config");
    cfg.neuron_count = c.at("neuron_count").get<int>();
    cfg.field_size = c.at("field_size").get<int>();
    cfg.t_max = c.at("t_max").get<int>();
    cfg.peak = c.at("peak").get<double>();
    cfg.w_min = c.at("w_min").get<int>();
    cfg.w_max = c.at("w_max").get<int>();
    cfg.delta_w = c.at("delta_w").get<int>();
    cfg.theta_up = c.at("theta_up").get<double>();
    cfg.theta_init_frac = c.at("theta_init_frac").get<double>();
    cfg.theta_down_frac = c.at("theta_down_frac").get<double>();
    cfg.theta_floor_frac = c.at("theta_floor_frac").get<double>();
    cfg.init_seed = c.at("init_seed").get<uint64_t>();
    SkanNetwork network(cfg);
    network.widths_ = j.at("widths").get<std::vector<uint16_t>>();
    network.thresholds_ = j.at("thresholds").get<std::vector<double>>();
    network.learning_ = j.at("learning").get<bool>();
    const size_t expected = static_cast<size_t>(cfg.neuron_count) * cfg.channel_count();
    if (network.widths_.size() != expected ||
        network.thresholds_.size() != static_cast<size_t>(cfg.neuron_count)) {
        throw DataError("network file has inconsistent dimensions");
    }
    return network;
}

void write_feature_grids_csv(const std::filesystem::path& path, const SkanNetwork& network) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    const int R = network.config().field_size;
    for (int k = 0; k < network.config().neuron_count; ++k) {
        out << "feature," << k << ",theta," << network.thresholds()[static_cast<size_t>(k)]
            << "\n";
        for (int row = 0; row < R; ++row) {
            for (int col = 0; col < R; ++col) {
                out << network.width_at(k, row * R + col);
                out << (col + 1 == R ? '\n' : ',');
            }
        }
    }
}

}  // namespace memsurf
