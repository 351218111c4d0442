#include "memsurf/frames.hpp"

namespace memsurf {

RecordingFrames build_frames(const Recording& on, int recording_index,
                             const FrameBuildConfig& config, const SkanNetwork* network,
                             SkanScratch* scratch, bool want_event_frames) {
    config.tracker.validate();
    config.pool.validate();
    RecordingFrames out;
    if (on.events.empty()) {
        return out;
    }
    if (network && !scratch) {
        throw ConfigError("build_frames: feature extraction needs a scratch buffer");
    }

    SurfaceConfig cfg = config.surface;
    cfg.dims = on.dims;
    MemorySurface event_surface(cfg);
    std::vector<MemorySurface> feature_surfaces;
    std::vector<const MemorySurface*> feature_ptrs;
    if (network) {
        const int K = network->config().neuron_count;
        feature_surfaces.reserve(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k) {
            feature_surfaces.emplace_back(cfg);
            feature_ptrs.push_back(&feature_surfaces.back());
        }
    }
    const MemorySurface* event_ptr = &event_surface;

    const int64_t t0 = on.events.front().t;
    const int64_t span = on.events.back().t - t0;
    const int64_t interval = config.tracker.sample_interval_us;
    size_t next = 0;
    int valid_frames = 0;
    for (int64_t k = 1; k <= span / interval; ++k) {
        const int64_t instant = t0 + k * interval;
        while (next < on.events.size() && on.events[next].t <= instant) {
            const Event& ev = on.events[next];
            event_surface.absorb(ev);
            if (network) {
                const auto fe = extract_feature_event(ev, event_surface, *network, *scratch);
                if (fe) {
                    feature_surfaces[static_cast<size_t>(fe->feature_id)].absorb(fe->as_event());
                }
            }
            ++next;
        }
        const int64_t now = cfg.basis == DecayBasis::kTime
                                ? instant
                                : std::max<int64_t>(event_surface.last_absorbed_i(), 0);

        SurfaceProfiles profiles = project_profiles(event_surface, now);
        TrackState state;
        state.t_us = instant;
        state.activation = profiles.total;
        smooth_normalize(profiles.rows, config.tracker.smoothing_window);
        smooth_normalize(profiles.cols, config.tracker.smoothing_window);
        const auto row_bounds = detect_bounds(profiles.rows, config.tracker.threshold);
        const auto col_bounds = detect_bounds(profiles.cols, config.tracker.threshold);
        if (row_bounds && col_bounds) {
            state.valid = true;
            state.bbox = BBox{col_bounds->lo, col_bounds->hi, row_bounds->lo, row_bounds->hi};
            state.mid_x = (state.bbox.x_lo + state.bbox.x_hi) / 2.0;
            state.mid_y = (state.bbox.y_lo + state.bbox.y_hi) / 2.0;

            if (want_event_frames) {
                FeatureFrame frame;
                frame.values = pool_frame(std::span{&event_ptr, 1}, state.bbox, now, config.pool);
                frame.label = on.label;
                frame.recording_index = recording_index;
                frame.frame_index = valid_frames;
                frame.t_us = instant;
                out.event_frames.push_back(std::move(frame));
            }
            if (network) {
                FeatureFrame frame;
                frame.values = pool_frame(feature_ptrs, state.bbox, now, config.pool);
                frame.label = on.label;
                frame.recording_index = recording_index;
                frame.frame_index = valid_frames;
                frame.t_us = instant;
                out.feature_frames.push_back(std::move(frame));
            }
            ++valid_frames;
        } else {
            ++out.skipped;
        }
        out.states.push_back(state);
    }
    return out;
}

}  // namespace memsurf
