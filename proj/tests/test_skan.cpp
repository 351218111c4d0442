#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "doctest.h"
#include "memsurf/skan.hpp"
#include "memsurf/synth.hpp"
#include "memsurf/util.hpp"

using namespace memsurf;

namespace {

SkanConfig small_config(int k, int r) {
    SkanConfig cfg;
    cfg.neuron_count = k;
    cfg.field_size = r;
    cfg.init_seed = 11;
    return cfg;
}

SpikePattern make_pattern(int channels, std::vector<std::pair<int, int>> spikes) {
    SpikePattern p;
    p.channel_count = channels;
    for (auto [ch, d] : spikes) {
        p.spikes.push_back({static_cast<uint16_t>(ch), static_cast<uint8_t>(d)});
    }
    return p;
}

/// Hungarian assignment (O(n^3)), returns the minimal total cost.
double hungarian(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    std::vector<double> u(n + 1, 0), v(n + 1, 0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, 1e100);
        std::vector<char> used(n + 1, false);
        do {
            used[j0] = true;
            const int i0 = p[j0];
            double delta = 1e100;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (!used[j]) {
                    const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    double total = 0;
    for (int j = 1; j <= n; ++j) {
        total += cost[p[j] - 1][j - 1];
    }
    return total;
}

SynthDataset tiny_dataset(uint64_t seed) {
    SynthDatasetOptions opt;
    opt.classes = 2;
    opt.per_class = 3;
    opt.dims = {128, 96};
    opt.seed = seed;
    opt.noise_rate = 0;
    return generate_synth_dataset(opt);
}

}  // namespace

TEST_CASE("encode_patch quantization") {
    std::vector<double> patch(9, 0.0);
    patch[4] = 1.0;
    patch[0] = std::exp(-1.0);
    const SpikePattern p = encode_patch(patch);
    REQUIRE(p.spikes.size() == 2);
    CHECK(p.spikes[0].channel == 0);
    CHECK(p.spikes[0].delay == 161);  // q = round(255 * e^-1) = 94
    CHECK(p.spikes[1].channel == 4);
    CHECK(p.spikes[1].delay == 0);
    patch[1] = 1.5;
    CHECK_THROWS_AS(encode_patch(patch), Error);
    patch[1] = -0.1;
    CHECK_THROWS_AS(encode_patch(patch), Error);
}

TEST_CASE("single uncontested neuron always wins below peak threshold") {
    SkanNetwork net(small_config(1, 3));
    net.set_threshold(0, 0.5);  // below the single-kernel peak h = 1
    net.freeze();
    SkanScratch scratch;
    for (int d = 0; d < 40; d += 7) {
        const auto r = net.infer(make_pattern(9, {{4, d}}), scratch);
        CHECK(r.winner == 0);
        CHECK(r.fire_step > d);
    }
}

TEST_CASE("empty pattern is rejected") {
    SkanNetwork net(small_config(1, 3));
    CHECK_THROWS_AS(net.step(SpikePattern{{}, 9}), Error);
}

TEST_CASE("learning aligns kernels: second presentation fires no later") {
    SkanConfig cfg = small_config(1, 5);
    cfg.theta_init_frac = 0.12;  // 3.0 for R=5: reachable by the pattern
    SkanNetwork net(cfg);
    const SpikePattern pattern =
        make_pattern(25, {{0, 3}, {5, 10}, {7, 0}, {12, 25}, {13, 25}, {20, 60}});
    const auto first = net.step(pattern);
    REQUIRE(first.winner == 0);
    for (int rep = 0; rep < 30; ++rep) {
        net.step(pattern);
    }
    SkanNetwork frozen = net;
    frozen.freeze();
    SkanScratch scratch;
    const auto later = frozen.infer(pattern, scratch);
    REQUIRE(later.winner == 0);
    CHECK(later.fire_step <= first.fire_step);
}

TEST_CASE("widths stay clamped during training") {
    SkanConfig cfg = small_config(2, 3);
    cfg.w_min = 2;
    cfg.w_max = 32;
    cfg.theta_init_frac = 0.1;
    SkanNetwork net(cfg);
    Rng rng(3);
    for (int step = 0; step < 3000; ++step) {
        std::vector<std::pair<int, int>> spikes;
        for (int ch = 0; ch < 9; ++ch) {
            if (rng.below(2)) {
                spikes.push_back({ch, static_cast<int>(rng.below(80))});
            }
        }
        if (spikes.empty()) {
            continue;
        }
        net.step(make_pattern(9, spikes));
        for (int k = 0; k < 2; ++k) {
            for (int ch = 0; ch < 9; ++ch) {
                CHECK(net.width_at(k, ch) >= cfg.w_min);
                CHECK(net.width_at(k, ch) <= cfg.w_max);
            }
        }
    }
    for (double theta : net.thresholds()) {
        CHECK(theta > 0);
    }
}

TEST_CASE("two neurons specialize onto two alternating patterns") {
    SkanConfig cfg = small_config(2, 5);
    SkanNetwork net(cfg);
    // Two disjoint fixed patterns over the 25 channels.
    const SpikePattern a =
        make_pattern(25, {{0, 0}, {1, 12}, {2, 30}, {3, 55}, {4, 80}, {5, 5}, {6, 18}});
    const SpikePattern b =
        make_pattern(25, {{12, 40}, {14, 0}, {16, 22}, {18, 70}, {20, 10}, {22, 35}, {24, 90}});
    for (int rep = 0; rep < 1500; ++rep) {
        net.step(rep % 2 ? a : b);
    }
    net.freeze();
    SkanScratch scratch;
    std::map<int, int> wins_a, wins_b;
    for (int rep = 0; rep < 100; ++rep) {
        wins_a[net.infer(a, scratch).winner]++;
        wins_b[net.infer(b, scratch).winner]++;
    }
    // Frozen inference is deterministic: identical pattern, identical winner.
    CHECK(wins_a.size() == 1);
    CHECK(wins_b.size() == 1);
    const int wa = wins_a.begin()->first;
    const int wb = wins_b.begin()->first;
    CHECK(wa >= 0);
    CHECK(wb >= 0);
    CHECK(wa != wb);
}

TEST_CASE("train_features: deterministic, at most one feature event per input event") {
    const SynthDataset ds = tiny_dataset(21);
    std::vector<Recording> on;
    for (const auto& rec : ds.data.recordings) {
        on.push_back(filter_on_events(rec));
    }
    std::vector<const Recording*> list;
    for (const auto& rec : on) {
        list.push_back(&rec);
    }
    SurfaceConfig surface;
    surface.kernel = Kernel::kExp;
    surface.basis = DecayBasis::kTime;
    surface.dims = ds.data.dims;

    SkanConfig cfg = small_config(6, 7);
    SkanNetwork net1(cfg), net2(cfg);
    train_features(list, surface, net1);
    train_features(list, surface, net2);
    CHECK_FALSE(net1.learning());
    CHECK(net1.widths() == net2.widths());
    CHECK(net1.thresholds() == net2.thresholds());

    // Counting oracle: at most one feature event per camera event, and the
    // per-feature counts sum to the number of winners.
    SurfaceConfig scfg = surface;
    scfg.dims = on[0].dims;
    MemorySurface event_surface(scfg);
    std::vector<int> counts(static_cast<size_t>(cfg.neuron_count), 0);
    SkanScratch scratch;
    int total = 0;
    for (const Event& ev : on[0].events) {
        event_surface.absorb(ev);
        const auto fe = extract_feature_event(ev, event_surface, net1, scratch);
        if (fe) {
            ++counts[static_cast<size_t>(fe->feature_id)];
            ++total;
            CHECK(fe->x == ev.x);
            CHECK(fe->t == ev.t);
            CHECK(fe->i == ev.i);
            CHECK(fe->feature_id < cfg.neuron_count);
        }
    }
    CHECK(total <= static_cast<int>(on[0].events.size()));
    int sum = 0;
    for (int c : counts) {
        sum += c;
    }
    CHECK(sum == total);
    CHECK(total > 0);
}

TEST_CASE("feature stability across dataset shuffles (Hungarian width distance)") {
    const SynthDataset ds = tiny_dataset(22);
    std::vector<Recording> on;
    for (const auto& rec : ds.data.recordings) {
        on.push_back(filter_on_events(rec));
    }
    SurfaceConfig surface;
    surface.kernel = Kernel::kExp;
    surface.basis = DecayBasis::kTime;
    surface.dims = ds.data.dims;
    const SkanConfig cfg = small_config(4, 7);

    auto train_with_order = [&](std::vector<size_t> order) {
        std::vector<const Recording*> list;
        for (size_t idx : order) {
            list.push_back(&on[idx]);
        }
        SkanNetwork net(cfg);
        train_features(list, surface, net);
        return net;
    };
    const SkanNetwork na = train_with_order({0, 1, 2, 3, 4, 5});
    const SkanNetwork nb = train_with_order({5, 2, 0, 4, 1, 3});

    const int C = cfg.channel_count();
    std::vector<std::vector<double>> cost(4, std::vector<double>(4, 0));
    double shuffled_scale = 0;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            double d = 0;
            for (int ch = 0; ch < C; ++ch) {
                const double diff = na.width_at(i, ch) - nb.width_at(j, ch);
                d += diff * diff;
            }
            cost[static_cast<size_t>(i)][static_cast<size_t>(j)] = std::sqrt(d / C);
        }
        // Scale: distance to a deliberately mismatched feature.
        double r = 0;
        for (int ch = 0; ch < C; ++ch) {
            const double diff = na.width_at(i, ch) - nb.width_at((i + 1) % 4, ch);
            r += diff * diff;
        }
        shuffled_scale += std::sqrt(r / C);
    }
    const double matched = hungarian(cost) / 4.0;
    const double mismatched = shuffled_scale / 4.0;
    // Optimal matching lines features up far better than a rotated pairing.
    CHECK(matched < 0.8 * mismatched);
}

TEST_CASE("random feature sets: seeded, distinct across seeds, fire after calibration") {
    const SkanConfig base = small_config(5, 7);
    const SkanNetwork r1 = random_features(5, 7, 101, base);
    const SkanNetwork r2 = random_features(5, 7, 101, base);
    const SkanNetwork r3 = random_features(5, 7, 102, base);
    CHECK_FALSE(r1.learning());
    CHECK(r1.widths() == r2.widths());
    CHECK(r1.widths() != r3.widths());

    // Calibration on sampled patches makes the mean patch fire.
    SkanNetwork net = random_features(5, 7, 103, base);
    Rng rng(5);
    std::vector<std::vector<double>> patches;
    for (int k = 0; k < 50; ++k) {
        std::vector<double> patch(49, 0.0);
        for (int ch = 0; ch < 49; ++ch) {
            if (rng.below(3) == 0) {
                patch[static_cast<size_t>(ch)] = rng.uniform();
            }
        }
        patch[24] = 1.0;
        patches.push_back(std::move(patch));
    }
    calibrate_thresholds(net, patches);
    std::vector<double> mean(49, 0.0);
    for (const auto& p : patches) {
        for (size_t ch = 0; ch < 49; ++ch) {
            mean[ch] += p[ch] / patches.size();
        }
    }
    for (double& v : mean) {
        v = std::clamp(v, 0.0, 1.0);
    }
    SkanScratch scratch;
    const auto result = net.infer(encode_patch(mean), scratch);
    CHECK(result.winner >= 0);
}

TEST_CASE("network serialization round-trip") {
    SkanConfig cfg = small_config(3, 5);
    SkanNetwork net(cfg);
    net.set_threshold(1, 2.5);
    net.freeze();
    const auto path = std::filesystem::temp_directory_path() / "memsurf_net_test.json";
    net.save(path);
    const SkanNetwork back = SkanNetwork::load(path);
    CHECK(back.widths() == net.widths());
    CHECK(back.thresholds() == net.thresholds());
    CHECK_FALSE(back.learning());
    CHECK(back.config().field_size == 5);
    std::filesystem::remove(path);
}
