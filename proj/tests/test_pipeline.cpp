#include <algorithm>

#include "doctest.h"
#include "memsurf/experiment.hpp"
#include "memsurf/util.hpp"

using namespace memsurf;

namespace {

SynthDataset pipeline_dataset(uint64_t seed, int per_class = 4) {
    SynthDatasetOptions opt;
    opt.classes = 4;
    opt.per_class = per_class;
    opt.dims = {128, 96};
    opt.seed = seed;
    opt.noise_rate = 200;
    return generate_synth_dataset(opt);
}

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.trials = 2;
    cfg.elm_hidden = 96;
    cfg.skan.neuron_count = 6;
    cfg.skan.field_size = 9;
    cfg.feature_train_per_class = 3;
    cfg.lambda_grid = {1e-2f, 1.0f};
    cfg.threads = 2;
    return cfg;
}

}  // namespace

TEST_CASE("build_frames: vector lengths and frame bookkeeping") {
    const SynthDataset ds = pipeline_dataset(31);
    const Recording on = filter_on_events(ds.data.recordings[0]);

    FrameBuildConfig fb;
    fb.surface.kernel = Kernel::kExp;
    fb.surface.basis = DecayBasis::kIndex;
    fb.surface.n_e = ds.calibrated_n_e;
    fb.surface.dims = ds.data.dims;

    SkanConfig sc;
    sc.neuron_count = 5;
    sc.field_size = 9;
    SkanNetwork net(sc);
    std::vector<const Recording*> list = {&on};
    train_features(list, fb.surface, net);

    SkanScratch scratch;
    const RecordingFrames rf = build_frames(on, 0, fb, &net, &scratch, true);
    REQUIRE(!rf.event_frames.empty());
    REQUIRE(rf.event_frames.size() == rf.feature_frames.size());
    CHECK(rf.states.size() == static_cast<size_t>(on.duration_us() / 3000));
    CHECK(rf.event_frames.size() + static_cast<size_t>(rf.skipped) == rf.states.size());
    for (const FeatureFrame& f : rf.event_frames) {
        CHECK(f.values.size() == 144);  // 72 x 2
        CHECK(f.label == on.label);
        for (float v : f.values) {
            CHECK(v >= 0.0f);
        }
    }
    for (const FeatureFrame& f : rf.feature_frames) {
        CHECK(f.values.size() == 72 * 2 * 5);
    }
    // Frame indices are dense over valid frames.
    for (size_t k = 0; k < rf.event_frames.size(); ++k) {
        CHECK(rf.event_frames[k].frame_index == static_cast<int>(k));
    }

    // Determinism of the whole pass.
    SkanScratch scratch2;
    const RecordingFrames rf2 = build_frames(on, 0, fb, &net, &scratch2, true);
    REQUIRE(rf.feature_frames.size() == rf2.feature_frames.size());
    for (size_t k = 0; k < rf.feature_frames.size(); ++k) {
        CHECK(rf.feature_frames[k].values == rf2.feature_frames[k].values);
    }
}

TEST_CASE("run_full on a small dataset: reproducible report, sane accuracies") {
    const SynthDataset ds = pipeline_dataset(32);
    const ExperimentConfig cfg = tiny_config();
    const std::vector<std::string> surfaces = {"ets", "eis"};
    const ProtocolResult a = run_full(ds, cfg, surfaces);
    const ProtocolResult b = run_full(ds, cfg, surfaces);
    CHECK(a.report.dump() == b.report.dump());  // byte-reproducible

    for (const auto& [key, series] : a.frame_acc) {
        CHECK(series.size() == 2);
        for (double acc : series) {
            CHECK(acc >= 0.0);
            CHECK(acc <= 1.0);
        }
    }
    CHECK(a.report.contains("activation_velocity_slopes"));
    CHECK(a.report.contains("elm_error_ratio"));
    CHECK(a.report["config"]["n_e"].get<int64_t>() == ds.calibrated_n_e);
    // Every arm/surface pair is present.
    for (const std::string& s : surfaces) {
        for (const std::string& arm : {"L-E", "ELM-E", "L-F", "ELM-F"}) {
            CHECK(a.frame_acc.count(s + "/" + arm) == 1);
        }
    }
}

TEST_CASE("run_frame_balanced: per-drop >= per-frame and short recordings excluded") {
    const SynthDataset ds = pipeline_dataset(33, 5);
    ExperimentConfig cfg = tiny_config();
    cfg.trials = 2;
    const ProtocolResult res = run_frame_balanced(ds, cfg, 8, {"eis"}, {"L-E", "L-F"});
    for (const auto& [key, drops] : res.drop_acc) {
        const auto& frames = res.frame_acc.at(key);
        for (size_t t = 0; t < drops.size(); ++t) {
            CHECK(drops[t] >= frames[t] - 0.15);  // voting rarely loses much
        }
    }
    // Asking for more frames than any recording has excludes everything.
    CHECK_THROWS_AS(run_frame_balanced(ds, cfg, 100000, {"eis"}, {"L-E"}), DataError);
}

TEST_CASE("run_velocity_segregated runs and reports velocities") {
    const SynthDataset ds = pipeline_dataset(34, 5);
    ExperimentConfig cfg = tiny_config();
    cfg.trials = 2;
    const ProtocolResult res = run_velocity_segregated(ds, cfg, 4, {"eis"}, {"L-E"});
    CHECK(res.report["midpoint_velocities"].size() == ds.data.recordings.size());
    CHECK(res.frame_acc.count("eis/L-E") == 1);
}

TEST_CASE("feature sweep grid covers cells and reports the baseline") {
    const SynthDataset ds = pipeline_dataset(35, 4);
    ExperimentConfig cfg = tiny_config();
    const ProtocolResult res = run_feature_sweep(ds, cfg, {5, 9}, {2, 4}, 2);
    CHECK(res.frame_acc.count("5x2/learnt") == 1);
    CHECK(res.frame_acc.count("9x4/random") == 1);
    CHECK(res.frame_acc.at("5x2/learnt").size() == 2);
    CHECK(res.report["baseline"].contains("frame_mean"));
    CHECK_THROWS_AS(run_feature_sweep(ds, cfg, {4}, {2}, 1), ConfigError);  // even size
}

TEST_CASE("bench_throughput: strictly more work is never faster, zero events rejected") {
    const SynthDataset ds = pipeline_dataset(36, 3);
    ExperimentConfig cfg = tiny_config();
    const BenchResult r = bench_throughput(ds, "ets", cfg);
    CHECK(r.events > 0);
    CHECK(r.absorb_eps >= r.track_eps);
    CHECK(r.track_eps >= r.full_eps);
    CHECK(r.full_eps > 0);

    SynthDataset empty = ds;
    for (auto& rec : empty.data.recordings) {
        rec.events.clear();
    }
    CHECK_THROWS_AS(bench_throughput(empty, "ets", cfg), DataError);
}

TEST_CASE("report files are written") {
    const SynthDataset ds = pipeline_dataset(37, 3);
    ExperimentConfig cfg = tiny_config();
    cfg.trials = 1;
    const ProtocolResult res = run_frame_balanced(ds, cfg, 4, {"eis"}, {"L-E"});
    const auto dir = std::filesystem::temp_directory_path() / "memsurf_report_test";
    std::filesystem::remove_all(dir);
    write_report(dir, res);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "accuracy.csv"));
    std::filesystem::remove_all(dir);
}
