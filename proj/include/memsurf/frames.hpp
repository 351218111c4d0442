#pragma once

#include <vector>

#include "memsurf/pooling.hpp"
#include "memsurf/skan.hpp"
#include "memsurf/surface.hpp"
#include "memsurf/tracker.hpp"

namespace memsurf {

struct FrameBuildConfig {
    SurfaceConfig surface;  // dims are taken from the recording
    TrackerConfig tracker;  // sample_interval_us drives the frame instants
    PoolConfig pool;
};

struct RecordingFrames {
    std::vector<FeatureFrame> event_frames;    // pooled from the raw event surface
    std::vector<FeatureFrame> feature_frames;  // pooled from the K feature surfaces
    std::vector<TrackState> states;
    int skipped = 0;  // sample instants with no valid detection
};

/// One streaming pass over an ON-filtered recording: absorb each event into
/// the event surface, run frozen feature extraction into per-feature
/// surfaces when a network is given, and at every sample interval detect
/// the target box and pool frames from it. Frames with no valid detection
/// are skipped and counted, never fabricated.
RecordingFrames build_frames(const Recording& on, int recording_index,
                             const FrameBuildConfig& config, const SkanNetwork* network,
                             SkanScratch* scratch, bool want_event_frames = true);

}  // namespace memsurf
