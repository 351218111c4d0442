#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "memsurf/aer_io.hpp"
#include "memsurf/synth.hpp"

using namespace memsurf;

namespace {

DropSpec basic_spec() {
    DropSpec spec;
    spec.shape_class = 0;
    spec.dims = {160, 120};
    spec.center_x = 80;
    spec.velocity = 500;
    spec.acceleration = 0;
    spec.noise_rate = 0;
    spec.seed = 5;
    return spec;
}

}  // namespace

TEST_CASE("shapes: four distinct classes, masks respect the wingspan ratios") {
    REQUIRE(shape_class_count() == 4);
    std::set<std::string> names;
    std::vector<int> widths;
    for (int c = 0; c < 4; ++c) {
        names.insert(shape_class_name(c));
        const ShapeMask m = rasterize_shape(c, 48, 0.0);
        REQUIRE(m.x_hi >= m.x_lo);
        widths.push_back(m.x_hi - m.x_lo + 1);
        int filled = 0;
        for (uint8_t v : m.grid) {
            filled += v;
        }
        CHECK(filled > 40);
    }
    CHECK(names.size() == 4);
    // Relative spans 9.1 : 7.5 : 10.3 : 9.0, scaled to the widest = 48 px.
    CHECK(std::abs(widths[2] - 48) <= 2);
    CHECK(std::abs(widths[0] - 48.0 * 9.1 / 10.3) <= 2.5);
    CHECK(std::abs(widths[1] - 48.0 * 7.5 / 10.3) <= 2.5);
    CHECK(std::abs(widths[3] - 48.0 * 9.0 / 10.3) <= 2.5);
}

TEST_CASE("generate_drop: no motion and no noise gives zero events") {
    DropSpec spec = basic_spec();
    spec.velocity = 0;
    const DropResult drop = generate_drop(spec);
    CHECK(drop.recording.events.empty());
    CHECK_FALSE(drop.entered);
}

TEST_CASE("generate_drop: determinism and validity") {
    const DropSpec spec = basic_spec();
    const DropResult a = generate_drop(spec);
    const DropResult b = generate_drop(spec);
    REQUIRE(a.recording.events.size() == b.recording.events.size());
    CHECK(a.recording.events.size() > 1000);
    for (size_t k = 0; k < a.recording.events.size(); ++k) {
        CHECK(a.recording.events[k].t == b.recording.events[k].t);
        CHECK(a.recording.events[k].x == b.recording.events[k].x);
        CHECK(a.recording.events[k].y == b.recording.events[k].y);
    }
    validate_recording(a.recording);
    CHECK(encode_events(a.recording) == encode_events(b.recording));
    // Every contour event is ON polarity.
    for (const Event& ev : a.recording.events) {
        CHECK(ev.p == 1);
    }
    // Timestamps are even (integer contractions keep strict order).
    for (const Event& ev : a.recording.events) {
        CHECK(ev.t % 2 == 0);
    }
}

TEST_CASE("generate_drop: doubling velocity halves the crossing time within 2%") {
    DropSpec spec = basic_spec();
    const DropResult slow = generate_drop(spec);
    spec.velocity *= 2;
    const DropResult fast = generate_drop(spec);
    REQUIRE(slow.entered);
    REQUIRE(fast.entered);
    CHECK(slow.crossing_ms == doctest::Approx(2.0 * fast.crossing_ms).epsilon(0.02));
}

TEST_CASE("generate_drop: never entering yields noise-only recording") {
    DropSpec spec = basic_spec();
    spec.velocity = 0;
    spec.noise_rate = 5000;
    spec.duration_floor_us = 400000;
    const DropResult drop = generate_drop(spec);
    CHECK_FALSE(drop.entered);
    CHECK(drop.recording.events.size() > 500);
    validate_recording(drop.recording);
}

TEST_CASE("generate_drop: trajectory covers the crossing with in-view frames") {
    const DropResult drop = generate_drop(basic_spec());
    REQUIRE(drop.entered);
    int in_view = 0;
    for (const TrajectoryPoint& pt : drop.trajectory) {
        if (pt.in_view) {
            ++in_view;
            CHECK(pt.x_lo >= 0);
            CHECK(pt.x_hi < 160);
            CHECK(pt.y_lo >= 0);
            CHECK(pt.y_hi < 120);
            CHECK(pt.cx == doctest::Approx((pt.x_lo + pt.x_hi) / 2.0));
        }
    }
    CHECK(in_view > 50);
}

TEST_CASE("time_warp: identity, scaling, monotone nonlinear, violations") {
    const DropResult drop = generate_drop(basic_spec());
    const Recording& rec = drop.recording;

    const Recording same = time_warp(rec, [](int64_t t) { return t; });
    for (size_t k = 0; k < rec.events.size(); ++k) {
        CHECK(same.events[k].t == rec.events[k].t);
    }

    const Recording doubled = time_warp(rec, [](int64_t t) { return 2 * t; });
    for (size_t k = 1; k < rec.events.size(); ++k) {
        CHECK(doubled.events[k].t - doubled.events[k - 1].t ==
              2 * (rec.events[k].t - rec.events[k - 1].t));
    }

    const int64_t total = rec.events.back().t;
    const Recording quad =
        time_warp(rec, [total](int64_t t) { return t + t / 2 * (t / (total + 1)); });
    for (size_t k = 1; k < quad.events.size(); ++k) {
        CHECK(quad.events[k].t >= quad.events[k - 1].t);
        CHECK(quad.events[k].i == rec.events[k].i);
    }

    CHECK_THROWS_AS(time_warp(rec, [total](int64_t t) { return total - t; }), DataError);
    CHECK_THROWS_AS(time_warp(rec, [](int64_t) { return int64_t{7}; }), DataError);
}

TEST_CASE("filter_on_events keeps order and reindexes densely") {
    DropSpec spec = basic_spec();
    spec.noise_rate = 20000;  // mixed polarity noise
    const DropResult drop = generate_drop(spec);
    const Recording on = filter_on_events(drop.recording);
    CHECK(on.events.size() < drop.recording.events.size());
    int64_t prev = -1;
    for (size_t k = 0; k < on.events.size(); ++k) {
        CHECK(on.events[k].p == 1);
        CHECK(on.events[k].i == static_cast<int64_t>(k));
        CHECK(on.events[k].t >= prev);
        prev = on.events[k].t;
    }
}

TEST_CASE("dataset generation: determinism, crossing statistics, manifest round-trip") {
    SynthDatasetOptions opt;
    opt.classes = 4;
    opt.per_class = 6;
    opt.dims = {160, 120};
    opt.seed = 77;
    opt.noise_rate = 200;
    const SynthDataset a = generate_synth_dataset(opt);
    const SynthDataset b = generate_synth_dataset(opt);
    REQUIRE(a.data.recordings.size() == 24);
    for (size_t k = 0; k < a.data.recordings.size(); ++k) {
        CHECK(encode_events(a.data.recordings[k]) == encode_events(b.data.recordings[k]));
    }
    CHECK(a.calibrated_n_e == b.calibrated_n_e);
    CHECK(a.calibrated_n_e > 0);

    double mean_crossing = 0;
    for (const auto& info : a.info) {
        mean_crossing += info.crossing_ms;
    }
    mean_crossing /= static_cast<double>(a.info.size());
    CHECK(mean_crossing == doctest::Approx(242).epsilon(0.12));

    const std::filesystem::path dir =
        std::filesystem::temp_directory_path() / "memsurf_synth_test";
    std::filesystem::remove_all(dir);
    write_synth_dataset(dir, a);
    const SynthDataset loaded = load_synth_dataset(dir / "manifest.json");
    REQUIRE(loaded.data.recordings.size() == a.data.recordings.size());
    CHECK(loaded.calibrated_n_e == a.calibrated_n_e);
    for (size_t k = 0; k < a.data.recordings.size(); ++k) {
        CHECK(loaded.data.recordings[k].label == a.data.recordings[k].label);
        CHECK(loaded.data.recordings[k].events.size() == a.data.recordings[k].events.size());
        CHECK(loaded.info[k].trajectory.size() == a.info[k].trajectory.size());
    }
    std::filesystem::remove_all(dir);
}
