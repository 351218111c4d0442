#include <cmath>

#include "doctest.h"
#include "memsurf/synth.hpp"
#include "memsurf/tracker.hpp"
#include "memsurf/util.hpp"

using namespace memsurf;

namespace {

SurfaceConfig bin_time(SensorDims dims) {
    SurfaceConfig cfg;
    cfg.kernel = Kernel::kBin;
    cfg.basis = DecayBasis::kTime;
    cfg.tau_e = 3000;
    cfg.dims = dims;
    return cfg;
}

/// Direct-convolution oracle for the shrink-at-border box average.
std::vector<double> box_average_oracle(const std::vector<double>& v, int window) {
    const int n = static_cast<int>(v.size());
    std::vector<double> out(v.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        double sum = 0;
        int count = 0;
        for (int j = i - (window - 1) / 2; j <= i + window / 2; ++j) {
            if (j >= 0 && j < n) {
                sum += v[static_cast<size_t>(j)];
                ++count;
            }
        }
        out[static_cast<size_t>(i)] = sum / count;
    }
    return out;
}

}  // namespace

TEST_CASE("projection: empty surface, single pixel, box-filter oracle") {
    MemorySurface s(bin_time({40, 30}));
    auto rows = project_and_smooth(s, Axis::kRows, 0, 8);
    for (double v : rows) {
        CHECK(v == 0.0);
    }

    s.absorb({10, 12, 100, 1, 0});
    rows = project_and_smooth(s, Axis::kRows, 100, 1);
    for (size_t y = 0; y < rows.size(); ++y) {
        CHECK(rows[y] == (y == 12 ? 1.0 : 0.0));
    }

    // window=8 over the impulse, against the direct convolution oracle.
    std::vector<double> raw(30, 0.0);
    raw[12] = 1.0;
    auto expected = box_average_oracle(raw, 8);
    const double peak = *std::max_element(expected.begin(), expected.end());
    for (double& v : expected) {
        v /= peak;
    }
    const auto smoothed = project_and_smooth(s, Axis::kRows, 100, 8);
    REQUIRE(smoothed.size() == expected.size());
    for (size_t y = 0; y < smoothed.size(); ++y) {
        CHECK(smoothed[y] == doctest::Approx(expected[y]).epsilon(1e-12));
    }

    Rng rng(4);
    MemorySurface s2(bin_time({40, 30}));
    int64_t t = 0;
    std::vector<double> raw_rows(30, 0.0);
    for (int64_t i = 0; i < 500; ++i) {
        t += static_cast<int64_t>(rng.below(20));
        const Event ev{static_cast<uint16_t>(rng.below(40)),
                       static_cast<uint16_t>(rng.below(30)), t, 1, i};
        s2.absorb(ev);
    }
    for (uint16_t y = 0; y < 30; ++y) {
        double sum = 0;
        for (uint16_t x = 0; x < 40; ++x) {
            sum += s2.sample_value(x, y, t);
        }
        raw_rows[y] = sum;
    }
    auto oracle = box_average_oracle(raw_rows, 8);
    const double mx = *std::max_element(oracle.begin(), oracle.end());
    for (double& v : oracle) {
        v /= mx;
    }
    const auto got = project_and_smooth(s2, Axis::kRows, t, 8);
    for (size_t y = 0; y < got.size(); ++y) {
        CHECK(got[y] == doctest::Approx(oracle[y]).epsilon(1e-9));
    }
}

TEST_CASE("detect_bounds: empty, single run, largest of two runs") {
    CHECK_FALSE(detect_bounds(std::vector<double>(10, 0.0), 0.1));
    const auto b = detect_bounds({0.2, 0.2, 0.05}, 0.1);
    REQUIRE(b);
    CHECK(b->lo == 0);
    CHECK(b->hi == 1);
    // runs of lengths 3 and 7
    std::vector<double> profile(20, 0.0);
    for (int i = 2; i < 5; ++i) profile[static_cast<size_t>(i)] = 0.5;
    for (int i = 9; i < 16; ++i) profile[static_cast<size_t>(i)] = 0.3;
    const auto big = detect_bounds(profile, 0.1);
    REQUIRE(big);
    CHECK(big->lo == 9);
    CHECK(big->hi == 15);
    // scan oracle over random profiles
    Rng rng(6);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> prof(32);
        for (double& v : prof) {
            v = rng.below(3) ? 0.0 : rng.uniform();
        }
        const auto got = detect_bounds(prof, 0.25);
        int best_len = 0, best_lo = -1;
        int cur_lo = -1;
        for (int i = 0; i <= 32; ++i) {
            if (i < 32 && prof[static_cast<size_t>(i)] >= 0.25) {
                if (cur_lo < 0) cur_lo = i;
            } else if (cur_lo >= 0) {
                if (i - cur_lo > best_len) {
                    best_len = i - cur_lo;
                    best_lo = cur_lo;
                }
                cur_lo = -1;
            }
        }
        if (best_len == 0) {
            CHECK_FALSE(got);
        } else {
            REQUIRE(got);
            CHECK(got->lo == best_lo);
            CHECK(got->hi == best_lo + best_len - 1);
        }
    }
}

TEST_CASE("detect_bounds invariant under positive scaling via normalization") {
    std::vector<double> profile = {0.0, 1.0, 4.0, 9.0, 2.0, 0.0, 0.5};
    auto a = profile;
    smooth_normalize(a, 1);
    auto b = profile;
    for (double& v : b) {
        v *= 37.5;
    }
    smooth_normalize(b, 1);
    const auto ba = detect_bounds(a, 0.1);
    const auto bb = detect_bounds(b, 0.1);
    REQUIRE(ba);
    REQUIRE(bb);
    CHECK(ba->lo == bb->lo);
    CHECK(ba->hi == bb->hi);
}

TEST_CASE("track: noise-free drop midpoints match ground truth") {
    DropSpec spec;
    spec.shape_class = 2;
    spec.dims = {160, 120};
    spec.center_x = 70;
    spec.velocity = 450;
    spec.acceleration = 1200;
    spec.noise_rate = 0;
    spec.seed = 9;
    const DropResult drop = generate_drop(spec);
    const auto states = track(drop.recording, bin_time(spec.dims), TrackerConfig{});
    REQUIRE(states.size() > 40);
    CHECK(states.size() ==
          static_cast<size_t>(filter_on_events(drop.recording).duration_us() / 3000));

    int in_view = 0, close = 0;
    for (const TrackState& s : states) {
        if (!s.valid) {
            continue;
        }
        const size_t ms = static_cast<size_t>(s.t_us / 1000);
        if (ms >= drop.trajectory.size() || !drop.trajectory[ms].in_view) {
            continue;
        }
        ++in_view;
        if (std::abs(s.mid_x - drop.trajectory[ms].cx) <= 4.0 &&
            std::abs(s.mid_y - drop.trajectory[ms].cy) <= 4.0) {
            ++close;
        }
    }
    REQUIRE(in_view > 20);
    CHECK(static_cast<double>(close) / in_view >= 0.95);
}

TEST_CASE("track: deterministic and frame count = floor(span/interval)") {
    DropSpec spec;
    spec.dims = {128, 96};
    spec.center_x = 60;
    spec.velocity = 600;
    spec.noise_rate = 1000;
    spec.seed = 77;
    const DropResult drop = generate_drop(spec);
    const auto a = track(drop.recording, bin_time(spec.dims), TrackerConfig{});
    const auto b = track(drop.recording, bin_time(spec.dims), TrackerConfig{});
    REQUIRE(a.size() == b.size());
    for (size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].valid == b[k].valid);
        CHECK(a[k].mid_x == b[k].mid_x);
        CHECK(a[k].mid_y == b[k].mid_y);
    }
}

TEST_CASE("midpoint_velocity: stationary, constant velocity, acceleration") {
    // Stationary target: synthetic states with fixed midpoint.
    std::vector<TrackState> states;
    for (int k = 1; k <= 50; ++k) {
        TrackState s;
        s.t_us = k * 3000;
        s.valid = true;
        s.mid_y = 40.0;
        s.mid_x = 20.0;
        states.push_back(s);
    }
    CHECK(midpoint_velocity(states, 0, 150000) == doctest::Approx(0.0));

    DropSpec spec;
    spec.dims = {160, 120};
    spec.center_x = 80;
    spec.velocity = 500;
    spec.acceleration = 0;
    spec.noise_rate = 0;
    spec.seed = 5;
    const DropResult drop = generate_drop(spec);
    const auto tracked = track(drop.recording, bin_time(spec.dims), TrackerConfig{});
    const double v = midpoint_velocity(tracked, drop.recording.events.front().t,
                                       drop.recording.events.back().t);
    CHECK(v == doctest::Approx(500).epsilon(0.10));

    DropSpec acc = spec;
    acc.acceleration = 3000;
    acc.velocity = 250;
    const DropResult drop2 = generate_drop(acc);
    const auto tracked2 = track(drop2.recording, bin_time(spec.dims), TrackerConfig{});
    const double v_mid = midpoint_velocity(tracked2, drop2.recording.events.front().t,
                                           drop2.recording.events.back().t);
    // velocity at the first valid frames
    const TrackState* first = nullptr;
    const TrackState* second = nullptr;
    for (const auto& s : tracked2) {
        if (s.valid) {
            if (!first) {
                first = &s;
            } else if (s.t_us - first->t_us >= 30000) {
                second = &s;
                break;
            }
        }
    }
    REQUIRE(first);
    REQUIRE(second);
    const double v_start = (second->mid_y - first->mid_y) /
                           (static_cast<double>(second->t_us - first->t_us) * 1e-6);
    CHECK(v_mid > v_start);

    std::vector<TrackState> too_few(1);
    CHECK_THROWS_AS(midpoint_velocity(too_few, 0, 1000), DataError);
}

TEST_CASE("activation_velocity_fit: exact two-point line and degenerate error") {
    // Synthetic drops at two velocities per class; slope must match the
    // two-point line through the (velocity, rate) pairs.
    std::vector<DropResult> drops;
    std::vector<const Recording*> recs;
    std::vector<int> labels;
    for (double v : {350.0, 750.0}) {
        DropSpec spec;
        spec.shape_class = 0;
        spec.dims = {160, 120};
        spec.center_x = 80;
        spec.velocity = v;
        spec.noise_rate = 0;
        spec.seed = static_cast<uint64_t>(v);
        drops.push_back(generate_drop(spec));
    }
    for (const auto& d : drops) {
        recs.push_back(&d.recording);
        labels.push_back(0);
    }
    const auto fit =
        activation_velocity_fit(recs, labels, 1, bin_time({160, 120}), TrackerConfig{});
    REQUIRE(fit.slope_per_class.size() == 1);
    CHECK(fit.samples_per_class[0] == 2);
    CHECK(std::isfinite(fit.slope_per_class[0]));

    // Same velocity twice -> degenerate.
    std::vector<const Recording*> same = {&drops[0].recording, &drops[0].recording};
    CHECK_THROWS_AS(
        activation_velocity_fit(same, {0, 0}, 1, bin_time({160, 120}), TrackerConfig{}),
        DataError);
}

TEST_CASE("time-based activation is more velocity sensitive than index-based") {
    std::vector<DropResult> drops;
    std::vector<const Recording*> recs;
    std::vector<int> labels;
    for (double v : {300.0, 500.0, 800.0, 1100.0}) {
        DropSpec spec;
        spec.shape_class = 1;
        spec.dims = {160, 120};
        spec.center_x = 80;
        spec.velocity = v;
        spec.noise_rate = 0;
        spec.seed = static_cast<uint64_t>(10 * v);
        drops.push_back(generate_drop(spec));
    }
    for (const auto& d : drops) {
        recs.push_back(&d.recording);
        labels.push_back(0);
    }
    SurfaceConfig ets;
    ets.kernel = Kernel::kExp;
    ets.basis = DecayBasis::kTime;
    ets.dims = {160, 120};
    SurfaceConfig eis = ets;
    eis.basis = DecayBasis::kIndex;
    eis.n_e = 300;
    const auto fit_t = activation_velocity_fit(recs, labels, 1, ets, TrackerConfig{});
    const auto fit_i = activation_velocity_fit(recs, labels, 1, eis, TrackerConfig{});
    CHECK(std::abs(fit_t.slope_per_class[0]) > std::abs(fit_i.slope_per_class[0]));
}

TEST_CASE("index-basis boxes are invariant to time warps at matching indices") {
    DropSpec spec;
    spec.dims = {128, 96};
    spec.center_x = 64;
    spec.velocity = 550;
    spec.noise_rate = 500;
    spec.seed = 13;
    const Recording on = filter_on_events(generate_drop(spec).recording);
    const Recording warped = time_warp(on, [](int64_t t) { return 3 * t + 17; });

    SurfaceConfig eis;
    eis.kernel = Kernel::kExp;
    eis.basis = DecayBasis::kIndex;
    eis.n_e = 250;
    eis.dims = spec.dims;
    MemorySurface sa(eis), sb(eis);
    size_t next = 0;
    for (int64_t checkpoint = 500; checkpoint < static_cast<int64_t>(on.events.size());
         checkpoint += 700) {
        while (next < on.events.size() && on.events[next].i <= checkpoint) {
            sa.absorb(on.events[next]);
            sb.absorb(warped.events[next]);
            ++next;
        }
        for (Axis axis : {Axis::kRows, Axis::kColumns}) {
            const auto pa = project_and_smooth(sa, axis, checkpoint, 8);
            const auto pb = project_and_smooth(sb, axis, checkpoint, 8);
            const auto ba = detect_bounds(pa, 0.1);
            const auto bb = detect_bounds(pb, 0.1);
            REQUIRE(ba.has_value() == bb.has_value());
            if (ba) {
                CHECK(ba->lo == bb->lo);
                CHECK(ba->hi == bb->hi);
            }
        }
    }
}
