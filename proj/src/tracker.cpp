#include "memsurf/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "memsurf/synth.hpp"

namespace memsurf {

void smooth_normalize(std::vector<double>& profile, int window) {
    if (window < 1) {
        throw ConfigError("smoothing window must be >= 1");
    }
    if (window > 1) {
        const int n = static_cast<int>(profile.size());
        const int lo_off = (window - 1) / 2;
        const int hi_off = window / 2;
        std::vector<double> smoothed(profile.size());
        // Prefix sums make the shrink-at-border box average O(n).
        std::vector<double> prefix(profile.size() + 1, 0.0);
        for (int i = 0; i < n; ++i) {
            prefix[i + 1] = prefix[i] + profile[i];
        }
        for (int i = 0; i < n; ++i) {
            const int lo = std::max(0, i - lo_off);
            const int hi = std::min(n - 1, i + hi_off);
            smoothed[i] = (prefix[hi + 1] - prefix[lo]) / (hi - lo + 1);
        }
        profile.swap(smoothed);
    }
    double peak = 0;
    for (double v : profile) {
        peak = std::max(peak, v);
    }
    if (peak > 0) {
        for (double& v : profile) {
            v /= peak;
        }
    }
}

SurfaceProfiles project_profiles(const MemorySurface& surface, int64_t now) {
    SurfaceProfiles out;
    out.rows.assign(surface.height(), 0.0);
    out.cols.assign(surface.width(), 0.0);
    const int width = surface.width();
    for (uint32_t pixel : surface.populated()) {
        const double v = surface.sample_index(pixel, now);
        out.rows[pixel / width] += v;
        out.cols[pixel % width] += v;
        out.total += v;
    }
    return out;
}

std::vector<double> project_and_smooth(const MemorySurface& surface, Axis axis, int64_t now,
                                       int window) {
    if (window < 1) {
        throw ConfigError("smoothing window must be >= 1");
    }
    SurfaceProfiles raw = project_profiles(surface, now);
    std::vector<double>& profile = axis == Axis::kRows ? raw.rows : raw.cols;
    smooth_normalize(profile, window);
    return std::move(profile);
}

std::optional<Bounds> detect_bounds(const std::vector<double>& profile, double threshold) {
    std::optional<Bounds> best;
    int best_len = 0;
    int run_start = -1;
    for (int i = 0; i <= static_cast<int>(profile.size()); ++i) {
        const bool above = i < static_cast<int>(profile.size()) && profile[i] >= threshold;
        if (above && run_start < 0) {
            run_start = i;
        } else if (!above && run_start >= 0) {
            const int len = i - run_start;
            if (len > best_len) {
                best_len = len;
                best = Bounds{run_start, i - 1};
            }
            run_start = -1;
        }
    }
    return best;
}

std::vector<TrackState> track(const Recording& rec, const SurfaceConfig& surface_config,
                              const TrackerConfig& tracker_config) {
    tracker_config.validate();
    const Recording on = filter_on_events(rec);
    std::vector<TrackState> states;
    if (on.events.empty()) {
        return states;
    }
    SurfaceConfig cfg = surface_config;
    cfg.dims = rec.dims;
    MemorySurface surface(cfg);

    const int64_t t0 = on.events.front().t;
    const int64_t span = on.events.back().t - t0;
    const int64_t interval = tracker_config.sample_interval_us;
    size_t next = 0;
    for (int64_t k = 1; k <= span / interval; ++k) {
        const int64_t instant = t0 + k * interval;
        while (next < on.events.size() && on.events[next].t <= instant) {
            surface.absorb(on.events[next]);
            ++next;
        }
        const int64_t now = cfg.basis == DecayBasis::kTime
                                ? instant
                                : std::max<int64_t>(surface.last_absorbed_i(), 0);
        SurfaceProfiles raw = project_profiles(surface, now);
        smooth_normalize(raw.rows, tracker_config.smoothing_window);
        smooth_normalize(raw.cols, tracker_config.smoothing_window);
        const auto row_bounds = detect_bounds(raw.rows, tracker_config.threshold);
        const auto col_bounds = detect_bounds(raw.cols, tracker_config.threshold);

        TrackState state;
        state.t_us = instant;
        state.activation = raw.total;
        if (row_bounds && col_bounds) {
            state.valid = true;
            state.bbox = BBox{col_bounds->lo, col_bounds->hi, row_bounds->lo, row_bounds->hi};
            state.mid_x = (state.bbox.x_lo + state.bbox.x_hi) / 2.0;
            state.mid_y = (state.bbox.y_lo + state.bbox.y_hi) / 2.0;
        }
        states.push_back(state);
    }
    return states;
}

double midpoint_velocity(const std::vector<TrackState>& states, int64_t span_t0, int64_t span_t1,
                         int64_t half_bracket_us) {
    const int64_t t_mid = span_t0 + (span_t1 - span_t0) / 2;
    const TrackState* before = nullptr;
    const TrackState* after = nullptr;
    for (const TrackState& s : states) {
        if (!s.valid) {
            continue;
        }
        if (s.t_us <= t_mid - half_bracket_us) {
            before = &s;  // nearest valid frame at or before the lower edge
        } else if (s.t_us > t_mid + half_bracket_us && !after) {
            after = &s;
            break;
        }
    }
    if (!before || !after) {
        // Fall back to the tightest valid bracket around the midpoint.
        before = nullptr;
        after = nullptr;
        for (const TrackState& s : states) {
            if (!s.valid) {
                continue;
            }
            if (s.t_us <= t_mid) {
                before = &s;
            } else if (!after) {
                after = &s;
                break;
            }
        }
    }
    if (!before || !after || after->t_us == before->t_us) {
        throw DataError("midpoint velocity undefined: no valid frames bracket the midpoint");
    }
    return (after->mid_y - before->mid_y) /
           (static_cast<double>(after->t_us - before->t_us) * 1e-6);
}

VelocityActivationFit activation_velocity_fit(const std::vector<const Recording*>& recordings,
                                              const std::vector<int>& labels, int classes,
                                              const SurfaceConfig& surface_config,
                                              const TrackerConfig& tracker_config,
                                              int64_t early_window_us) {
    if (recordings.size() != labels.size()) {
        throw ConfigError("recordings/labels size mismatch");
    }
    std::vector<std::vector<std::pair<double, double>>> samples(classes);
    for (size_t k = 0; k < recordings.size(); ++k) {
        const Recording& rec = *recordings[k];
        if (rec.events.empty()) {
            continue;
        }
        const std::vector<TrackState> states = track(rec, surface_config, tracker_config);
        double velocity;
        try {
            velocity = midpoint_velocity(states, rec.events.front().t, rec.events.back().t);
        } catch (const DataError&) {
            continue;
        }
        // Mean rate of change of activation over the early detection window.
        const TrackState* first_valid = nullptr;
        const TrackState* window_end = nullptr;
        for (const TrackState& s : states) {
            if (!s.valid) {
                continue;
            }
            if (!first_valid) {
                first_valid = &s;
            }
            if (s.t_us - first_valid->t_us <= early_window_us) {
                window_end = &s;
            } else {
                break;
            }
        }
        if (!first_valid || !window_end || window_end == first_valid) {
            continue;
        }
        const double rate = (window_end->activation - first_valid->activation) /
                            (static_cast<double>(window_end->t_us - first_valid->t_us) * 1e-6);
        if (labels[k] < 0 || labels[k] >= classes) {
            throw DataError("label out of range in activation_velocity_fit");
        }
        samples[static_cast<size_t>(labels[k])].push_back({velocity, rate});
    }

    VelocityActivationFit fit;
    fit.slope_per_class.resize(classes);
    fit.samples_per_class.resize(classes);
    for (int c = 0; c < classes; ++c) {
        const auto& pts = samples[static_cast<size_t>(c)];
        fit.samples_per_class[c] = static_cast<int>(pts.size());
        if (pts.size() < 2) {
            throw DataError("activation_velocity_fit: class " + std::to_string(c) +
                            " has fewer than 2 usable recordings");
        }
        double mean_v = 0, mean_r = 0;
        for (const auto& [v, r] : pts) {
            mean_v += v;
            mean_r += r;
        }
        mean_v /= pts.size();
        mean_r /= pts.size();
        double num = 0, den = 0;
        for (const auto& [v, r] : pts) {
            num += (v - mean_v) * (r - mean_r);
            den += (v - mean_v) * (v - mean_v);
        }
        if (den == 0) {
            throw DataError("activation_velocity_fit: degenerate velocities for class " +
                            std::to_string(c));
        }
        fit.slope_per_class[c] = num / den;
    }
    return fit;
}

void write_track_csv(const std::filesystem::path& path, const std::string& recording_id,
                     const std::vector<TrackState>& states) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "recording_id,frame_instant_us,x_lo,x_hi,y_lo,y_hi,mid_x,mid_y\n";
    for (const TrackState& s : states) {
        if (!s.valid) {
            out << recording_id << "," << s.t_us << ",,,,,,\n";
            continue;
        }
        out << recording_id << "," << s.t_us << "," << s.bbox.x_lo << "," << s.bbox.x_hi << ","
            << s.bbox.y_lo << "," << s.bbox.y_hi << "," << s.mid_x << "," << s.mid_y << "\n";
    }
}

}  // namespace memsurf
