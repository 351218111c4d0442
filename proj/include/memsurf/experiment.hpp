#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "memsurf/classify.hpp"
#include "memsurf/frames.hpp"
#include "memsurf/synth.hpp"

namespace memsurf {

inline const std::vector<std::string> kAllSurfaceCodes = {"bts", "lts", "ets",
                                                          "bis", "lis", "eis"};

struct ExperimentConfig {
    int64_t tau_e = 3000;
    int64_t n_e = 554;
    bool auto_n_e = true;  // n_e = round(mean dataset event rate x tau_e)
    TrackerConfig tracker;
    PoolConfig pool;
    SkanConfig skan;
    int elm_hidden = 2000;
    std::vector<float> lambda_grid = {1e-3f, 1e-1f, 1e1f};
    int trials = 20;
    uint64_t split_seed = 42;
    int feature_train_per_class = 50;
    double validation_fraction = 0.25;
    unsigned threads = 0;  // 0 = hardware concurrency

    void validate() const;
};

/// Aggregated protocol output. `report` is the full reproducible JSON; the
/// accuracy maps give per-trial series keyed "<surface>/<arm>" (for the
/// sweep, "<size>x<count>/<learnt|random>").
struct ProtocolResult {
    std::string protocol;
    nlohmann::json report;
    std::map<std::string, std::vector<double>> frame_acc;
    std::map<std::string, std::vector<double>> drop_acc;

    double median_frame_acc(const std::string& key) const;
    double median_drop_acc(const std::string& key) const;
    double mean_frame_acc(const std::string& key) const;
};

/// Fig 12 protocol: per trial a stratified 50/50 recording split, features
/// trained on the training half (up to feature_train_per_class per class,
/// plus flips), then L-E / ELM-E / L-F / ELM-F on every surface method.
ProtocolResult run_full(const SynthDataset& ds, const ExperimentConfig& config,
                        const std::vector<std::string>& surfaces = kAllSurfaceCodes);

/// Frame-balanced protocol: n frames sampled uniformly at random per
/// training recording; evaluation on the held-out recordings' frames.
ProtocolResult run_frame_balanced(const SynthDataset& ds, const ExperimentConfig& config, int n,
                                  const std::vector<std::string>& surfaces = {"eis", "ets"},
                                  const std::vector<std::string>& arms = {"L-E", "L-F"});

/// Velocity-segregated protocol: recordings split into slow/fast halves by
/// tracker-estimated midpoint velocity; train on the n first (slowest)
/// frames of slow recordings, test on the n last (fastest) frames of fast
/// recordings.
ProtocolResult run_velocity_segregated(const SynthDataset& ds, const ExperimentConfig& config,
                                       int n,
                                       const std::vector<std::string>& surfaces = {"eis", "ets"},
                                       const std::vector<std::string>& arms = {"L-E", "L-F"});

/// Feature size/count grid with learnt vs random feature sets on the
/// exponential index surface, plus the no-feature linear baseline.
ProtocolResult run_feature_sweep(const SynthDataset& ds, const ExperimentConfig& config,
                                 const std::vector<int>& sizes = {3, 5, 9, 13, 17},
                                 const std::vector<int>& counts = {1, 5, 10, 25, 50},
                                 int sets = 3);

struct BenchResult {
    int64_t events = 0;
    double absorb_eps = 0;        // events/s, absorb only
    double track_eps = 0;         // absorb + tracking
    double full_eps = 0;          // absorb + tracking + features + pooling
    nlohmann::json meta;
};

BenchResult bench_throughput(const SynthDataset& ds, const std::string& surface_code,
                             const ExperimentConfig& config);

/// Writes report.json plus flat accuracy.csv under dir.
void write_report(const std::filesystem::path& dir, const ProtocolResult& result);

void write_frames_csv(const std::filesystem::path& path, const std::vector<FeatureFrame>& frames,
                      const std::vector<std::string>& recording_ids);

}  // namespace memsurf
