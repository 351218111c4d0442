#include "memsurf/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "memsurf/util.hpp"

namespace memsurf {

namespace {

using json = nlohmann::json;

struct Vec2 {
    double x, y;
};

// Planform outlines in unit space: x spans the wingspan [-0.5, 0.5], y runs
// nose (negative) to tail (positive). Only the x >= 0 half is listed; the
// full polygon mirrors it across the centerline. Every edge stays well away
// from vertical and horizontal so that vertical motion flips occupancy along
// the whole outline, not just at the leading and trailing edges.
const std::array<std::vector<Vec2>, 4> kHalfOutlines = {{
    // delta: rear-set peak, long straight-tapered nose
    {{0.02, -0.60}, {0.24, -0.16}, {0.50, 0.20}, {0.03, 0.60}},
    // arrow: front-set peak, gently tapering afterbody
    {{0.02, -0.52}, {0.50, -0.10}, {0.28, 0.24}, {0.03, 0.52}},
    // swing: mid-set peak on the longest planform
    {{0.02, -0.66}, {0.20, -0.30}, {0.50, 0.02}, {0.22, 0.35}, {0.04, 0.66}},
    // canard: twin humps, a fore-plane bump ahead of the main peak
    {{0.02, -0.54}, {0.26, -0.34}, {0.13, -0.16}, {0.50, 0.12}, {0.20, 0.36}, {0.05, 0.54}},
}};

// Relative wingspans of the four classes.
constexpr std::array<double, 4> kWingspanRatio = {9.1, 7.5, 10.3, 9.0};
constexpr double kMaxWingspanRatio = 10.3;

const std::array<std::string, 4> kClassNames = {"delta", "arrow", "swing", "canard"};

constexpr int64_t kMicroStepUs = 100;
constexpr int64_t kMaxJitterUs = 200;
constexpr int64_t kSimCapUs = 8'000'000;  // keeps timestamps inside 23 bits

std::vector<Vec2> full_polygon(int cls) {
    const auto& half = kHalfOutlines[static_cast<size_t>(cls)];
    std::vector<Vec2> poly(half.begin(), half.end());
    for (size_t k = half.size(); k-- > 0;) {
        poly.push_back({-half[k].x, half[k].y});
    }
    return poly;
}

bool point_in_polygon(const std::vector<Vec2>& poly, double px, double py) {
    bool inside = false;
    for (size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y > py) != (b.y > py) &&
            px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x) {
            inside = !inside;
        }
    }
    return inside;
}

}  // namespace

int shape_class_count() {
    return static_cast<int>(kHalfOutlines.size());
}

const std::string& shape_class_name(int cls) {
    if (cls < 0 || cls >= shape_class_count()) {
        throw ConfigError("shape class out of range: " + std::to_string(cls));
    }
    return kClassNames[static_cast<size_t>(cls)];
}

ShapeMask rasterize_shape(int cls, double wingspan_px, double rotation_deg) {
    if (cls < 0 || cls >= shape_class_count()) {
        throw ConfigError("shape class out of range: " + std::to_string(cls));
    }
    if (wingspan_px < 4.0) {
        throw ConfigError("wingspan too small to rasterize");
    }
    const double span = wingspan_px * kWingspanRatio[static_cast<size_t>(cls)] / kMaxWingspanRatio;
    const double rad = rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    std::vector<Vec2> poly = full_polygon(cls);
    double min_x = 1e30, max_x = -1e30, min_y = 1e30, max_y = -1e30;
    for (Vec2& v : poly) {
        const double px = v.x * span, py = v.y * span;
        v = {px * c - py * s, px * s + py * c};
        min_x = std::min(min_x, v.x);
        max_x = std::max(max_x, v.x);
        min_y = std::min(min_y, v.y);
        max_y = std::max(max_y, v.y);
    }
    ShapeMask mask;
    const double ox = std::floor(min_x) - 1.0;
    const double oy = std::floor(min_y) - 1.0;
    mask.width = static_cast<int>(std::ceil(max_x) - ox) + 2;
    mask.height = static_cast<int>(std::ceil(max_y) - oy) + 2;
    mask.grid.assign(static_cast<size_t>(mask.width) * mask.height, 0);
    mask.x_lo = mask.width;
    mask.y_lo = mask.height;
    for (int my = 0; my < mask.height; ++my) {
        for (int mx = 0; mx < mask.width; ++mx) {
            if (point_in_polygon(poly, ox + mx + 0.5, oy + my + 0.5)) {
                mask.grid[static_cast<size_t>(my) * mask.width + mx] = 1;
                mask.x_lo = std::min(mask.x_lo, mx);
                mask.x_hi = std::max(mask.x_hi, mx);
                mask.y_lo = std::min(mask.y_lo, my);
                mask.y_hi = std::max(mask.y_hi, my);
            }
        }
    }
    if (mask.x_hi < mask.x_lo) {
        throw ConfigError("silhouette rasterized to an empty mask");
    }
    return mask;
}

void DropSpec::validate() const {
    if (shape_class < 0 || shape_class >= shape_class_count()) {
        throw ConfigError("shape class out of range");
    }
    if (scale <= 0 || noise_rate < 0 || acceleration < 0 || velocity < 0) {
        throw ConfigError("drop spec parameters out of range");
    }
    if (dims.width == 0 || dims.height == 0) {
        throw ConfigError("drop spec needs non-empty sensor dims");
    }
}

DropResult generate_drop(const DropSpec& spec) {
    spec.validate();
    const ShapeMask mask =
        rasterize_shape(spec.shape_class, spec.wingspan_frac * spec.dims.width * spec.scale,
                        spec.rotation_deg);
    const int frame_w = spec.dims.width;
    const int frame_h = spec.dims.height;
    const int ox = static_cast<int>(std::llround(spec.center_x - mask.width / 2.0));
    if (ox + mask.x_lo < 0 || ox + mask.x_hi >= frame_w) {
        throw ConfigError("silhouette does not fit horizontally at entry");
    }
    const double y_start = spec.start_y.value_or(-static_cast<double>(mask.y_hi) - 1.0);

    Rng rng(spec.seed);
    struct Raw {
        int64_t t;
        uint16_t x, y;
        int8_t p;
    };
    std::vector<Raw> raw;

    DropResult out;
    const bool moving = spec.velocity > 0 || spec.acceleration > 0;
    int64_t oy_prev = static_cast<int64_t>(std::llround(y_start));
    int64_t sim_end = 0;

    auto visible_at = [&](int64_t oy) {
        return oy + mask.y_hi >= 0 && oy + mask.y_lo < frame_h;
    };
    if (visible_at(oy_prev)) {
        out.entered = true;
        out.entry_us = 0;
    }

    if (moving) {
        for (int64_t k = 1;; ++k) {
            const int64_t t_us = k * kMicroStepUs;
            if (t_us > kSimCapUs) {
                sim_end = kSimCapUs;
                break;
            }
            const double t_s = static_cast<double>(t_us) * 1e-6;
            const double y =
                y_start + spec.velocity * t_s + 0.5 * spec.acceleration * t_s * t_s;
            const int64_t oy = static_cast<int64_t>(std::llround(y));
            if (oy != oy_prev) {
                // Contour events: pixels whose occupancy flips across the shift.
                const int64_t band_lo = std::max<int64_t>(std::min(oy_prev, oy), 0);
                const int64_t band_hi =
                    std::min<int64_t>(std::max(oy_prev, oy) + mask.height - 1, frame_h - 1);
                for (int64_t Y = band_lo; Y <= band_hi; ++Y) {
                    const int before_row = static_cast<int>(Y - oy_prev);
                    const int after_row = static_cast<int>(Y - oy);
                    for (int mx = mask.x_lo; mx <= mask.x_hi; ++mx) {
                        if (mask.at(mx, before_row) != mask.at(mx, after_row)) {
                            // Jitter stays even-valued; integer contractions of the
                            // time axis (e.g. t -> t/2) then preserve strict order.
                            const int64_t jitter = 2 * static_cast<int64_t>(rng.below(
                                                           kMaxJitterUs / 2 + 1));
                            raw.push_back({t_us + jitter, static_cast<uint16_t>(ox + mx),
                                           static_cast<uint16_t>(Y), 1});
                        }
                    }
                }
                oy_prev = oy;
            }
            if (!out.entered && visible_at(oy)) {
                out.entered = true;
                out.entry_us = t_us;
            }
            if (out.entered && out.exit_us < 0 && oy + mask.y_lo >= frame_h) {
                out.exit_us = t_us;
                sim_end = t_us;
                break;
            }
        }
    }
    if (out.entered && out.exit_us >= 0) {
        out.crossing_ms = static_cast<double>(out.exit_us - out.entry_us) / 1000.0;
    }

    int64_t duration = sim_end + spec.tail_us;
    duration = std::max(duration, spec.duration_floor_us);
    duration = std::min(duration, kSimCapUs);

    const uint64_t noise_count =
        rng.poisson(spec.noise_rate * static_cast<double>(duration) * 1e-6);
    for (uint64_t k = 0; k < noise_count; ++k) {
        Raw ev;
        ev.t = 2 * static_cast<int64_t>(rng.below(static_cast<uint64_t>(duration / 2 + 1)));
        ev.x = static_cast<uint16_t>(rng.below(static_cast<uint64_t>(frame_w)));
        ev.y = static_cast<uint16_t>(rng.below(static_cast<uint64_t>(frame_h)));
        ev.p = rng.below(2) ? 1 : -1;
        raw.push_back(ev);
    }

    std::stable_sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) { return a.t < b.t; });

    out.recording.dims = spec.dims;
    out.recording.label = spec.shape_class;
    out.recording.events.reserve(raw.size());
    for (const Raw& ev : raw) {
        out.recording.events.push_back(Event{ev.x, ev.y, ev.t + spec.start_delay_us, ev.p,
                                             static_cast<int64_t>(out.recording.events.size())});
    }
    if (out.entry_us >= 0) {
        out.entry_us += spec.start_delay_us;
    }
    if (out.exit_us >= 0) {
        out.exit_us += spec.start_delay_us;
    }

    // Ground truth at 1 ms granularity, in final stream time.
    const int64_t total_ms = (spec.start_delay_us + duration) / 1000;
    out.trajectory.reserve(static_cast<size_t>(total_ms) + 1);
    for (int64_t ms = 0; ms <= total_ms; ++ms) {
        TrajectoryPoint pt;
        pt.t_ms = ms;
        const int64_t sim_t = ms * 1000 - spec.start_delay_us;
        if (sim_t >= 0 && sim_t <= sim_end + spec.tail_us) {
            const double t_s = static_cast<double>(std::min(sim_t, sim_end)) * 1e-6;
            const double y = moving ? y_start + spec.velocity * t_s +
                                          0.5 * spec.acceleration * t_s * t_s
                                    : y_start;
            const int64_t oy = static_cast<int64_t>(std::llround(y));
            const int64_t top = oy + mask.y_lo;
            const int64_t bottom = oy + mask.y_hi;
            if (sim_t <= sim_end && bottom >= 0 && top < frame_h) {
                pt.visible = true;
                pt.in_view = top >= 0 && bottom < frame_h;
                pt.x_lo = ox + mask.x_lo;
                pt.x_hi = ox + mask.x_hi;
                pt.y_lo = static_cast<int>(std::max<int64_t>(top, 0));
                pt.y_hi = static_cast<int>(std::min<int64_t>(bottom, frame_h - 1));
                pt.cx = (pt.x_lo + pt.x_hi) / 2.0;
                pt.cy = (pt.y_lo + pt.y_hi) / 2.0;
            }
        }
        out.trajectory.push_back(pt);
    }
    return out;
}

Recording time_warp(const Recording& rec, const std::function<int64_t(int64_t)>& warp) {
    Recording out = rec;
    int64_t prev_in = -1, prev_out = -1;
    for (size_t k = 0; k < out.events.size(); ++k) {
        const int64_t t_in = rec.events[k].t;
        const int64_t t_out = warp(t_in);
        if (k == 0 && t_out < 0) {
            throw DataError("time_warp: warp maps first timestamp below zero");
        }
        if (prev_in >= 0) {
            if (t_in == prev_in ? t_out != prev_out : t_out <= prev_out) {
                throw DataError("time_warp: non-increasing warp detected at event " +
                                std::to_string(k));
            }
        }
        out.events[k].t = t_out;
        prev_in = t_in;
        prev_out = t_out;
    }
    return out;
}

Recording filter_on_events(const Recording& rec) {
    Recording out;
    out.dims = rec.dims;
    out.label = rec.label;
    out.meta = rec.meta;
    for (const Event& ev : rec.events) {
        if (ev.p > 0) {
            Event kept = ev;
            kept.i = static_cast<int64_t>(out.events.size());
            out.events.push_back(kept);
        }
    }
    return out;
}

SynthDataset generate_synth_dataset(const SynthDatasetOptions& options) {
    if (options.classes < 1 || options.classes > shape_class_count()) {
        throw ConfigError("classes must be 1.." + std::to_string(shape_class_count()));
    }
    if (options.per_class < 1) {
        throw ConfigError("per_class must be positive");
    }
    SynthDataset ds;
    ds.options = options;
    ds.data.dims = options.dims;
    for (int c = 0; c < options.classes; ++c) {
        ds.data.class_names.push_back(shape_class_name(c));
    }

    double rate_sum = 0;
    int rated = 0;
    for (int c = 0; c < options.classes; ++c) {
        for (int k = 0; k < options.per_class; ++k) {
            const uint64_t rec_seed =
                derive_seed(options.seed, static_cast<uint64_t>(c * options.per_class + k));
            Rng rng(rec_seed);

            DropSpec spec;
            spec.shape_class = c;
            spec.dims = options.dims;
            spec.wingspan_frac = options.wingspan_frac;
            spec.scale = rng.range(options.scale_lo, options.scale_hi);
            spec.rotation_deg = rng.range(options.rotation_lo, options.rotation_hi);
            spec.acceleration = options.acceleration;
            spec.noise_rate = options.noise_rate;
            spec.seed = derive_seed(rec_seed, 0xD0);
            spec.start_delay_us = 2 * rng.range_int(0, options.max_start_delay_us / 2);
            spec.tail_us = options.tail_us;

            double crossing_ms =
                options.sweep ? rng.range(options.crossing_ms_lo, options.crossing_ms_hi)
                              : rng.normal(options.crossing_ms_mean, options.crossing_ms_std);
            crossing_ms = std::clamp(crossing_ms, 80.0, 600.0);

            const ShapeMask mask = rasterize_shape(
                c, spec.wingspan_frac * options.dims.width * spec.scale, spec.rotation_deg);
            const double travel =
                static_cast<double>(options.dims.height + (mask.y_hi - mask.y_lo) + 1);
            const double t_cross = crossing_ms * 1e-3;
            double v0 = travel / t_cross - 0.5 * spec.acceleration * t_cross;
            if (v0 < 20.0) {
                v0 = 20.0;  // crossing slower than free fall allows; floor the entry speed
            }
            spec.velocity = v0;

            const double half_w = mask.width / 2.0;
            const double x_min = half_w - mask.x_lo + 1;
            const double x_max = options.dims.width - 1 - (mask.x_hi - half_w) - 1;
            if (x_max <= x_min) {
                throw ConfigError("silhouette too wide for sensor");
            }
            spec.center_x = rng.range(x_min, x_max);

            DropResult drop = generate_drop(spec);

            SynthRecordingInfo info;
            info.label = c;
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%04d", k);
            info.id = shape_class_name(c) + "/" + buf;
            info.spec = spec;
            info.trajectory = std::move(drop.trajectory);
            info.crossing_ms = drop.crossing_ms;
            info.entry_us = drop.entry_us;
            info.exit_us = drop.exit_us;

            drop.recording.label = c;
            drop.recording.meta = info.id;

            const Recording on = filter_on_events(drop.recording);
            if (on.events.size() > 1 && on.duration_us() > 0) {
                rate_sum += static_cast<double>(on.events.size()) /
                            (static_cast<double>(on.duration_us()) * 1e-6);
                ++rated;
            }

            ds.data.recordings.push_back(std::move(drop.recording));
            ds.info.push_back(std::move(info));
        }
    }
    ds.mean_event_rate_hz = rated ? rate_sum / rated : 0.0;
    ds.calibrated_n_e = std::max<int64_t>(1, std::llround(ds.mean_event_rate_hz * 3000e-6));
    return ds;
}

namespace {

json spec_to_json(const DropSpec& s) {
    json j{{"shape_class", s.shape_class},
           {"center_x", s.center_x},
           {"velocity", s.velocity},
           {"acceleration", s.acceleration},
           {"scale", s.scale},
           {"rotation_deg", s.rotation_deg},
           {"noise_rate", s.noise_rate},
           {"seed", s.seed},
           {"dims", {s.dims.width, s.dims.height}},
           {"wingspan_frac", s.wingspan_frac},
           {"start_delay_us", s.start_delay_us},
           {"tail_us", s.tail_us},
           {"duration_floor_us", s.duration_floor_us}};
    if (s.start_y) {
        j["start_y"] = *s.start_y;
    }
    return j;
}

DropSpec spec_from_json(const json& j) {
    DropSpec s;
    s.shape_class = j.at("shape_class").get<int>();
    s.center_x = j.at("center_x").get<double>();
    s.velocity = j.at("velocity").get<double>();
    s.acceleration = j.at("acceleration").get<double>();
    s.scale = j.at("scale").get<double>();
    s.rotation_deg = j.at("rotation_deg").get<double>();
    s.noise_rate = j.at("noise_rate").get<double>();
    s.seed = j.at("seed").get<uint64_t>();
    s.dims = {j.at("dims")[0].get<uint16_t>(), j.at("dims")[1].get<uint16_t>()};
    s.wingspan_frac = j.at("wingspan_frac").get<double>();
    s.start_delay_us = j.at("start_delay_us").get<int64_t>();
    s.tail_us = j.at("tail_us").get<int64_t>();
    s.duration_floor_us = j.at("duration_floor_us").get<int64_t>();
    if (j.contains("start_y")) {
        s.start_y = j.at("start_y").get<double>();
    }
    return s;
}

}  // namespace

void write_synth_dataset(const std::filesystem::path& dir, const SynthDataset& ds) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "memsurf-dataset";
    manifest["version"] = 1;
    manifest["dims"] = {ds.data.dims.width, ds.data.dims.height};
    manifest["classes"] = ds.data.class_names;
    manifest["seed"] = ds.options.seed;
    manifest["mean_event_rate_hz"] = ds.mean_event_rate_hz;
    manifest["calibrated_n_e"] = ds.calibrated_n_e;
    manifest["jitter_us_max"] = 200;  // free parameter of the contour model
    json recs = json::array();
    for (size_t k = 0; k < ds.data.recordings.size(); ++k) {
        const SynthRecordingInfo& info = ds.info[k];
        const fs::path rel = info.id + ".bin";
        fs::create_directories(dir / rel.parent_path());
        write_recording(dir / rel, ds.data.recordings[k]);
        json traj = json::array();
        for (const TrajectoryPoint& pt : info.trajectory) {
            traj.push_back({pt.t_ms, pt.x_lo, pt.x_hi, pt.y_lo, pt.y_hi, pt.cx, pt.cy,
                            pt.visible, pt.in_view});
        }
        recs.push_back({{"id", info.id},
                        {"path", rel.string()},
                        {"label", info.label},
                        {"spec", spec_to_json(info.spec)},
                        {"crossing_ms", info.crossing_ms},
                        {"entry_us", info.entry_us},
                        {"exit_us", info.exit_us},
                        {"trajectory", traj}});
    }
    manifest["recordings"] = recs;
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(1) << "\n";
}

SynthDataset load_synth_dataset(const std::filesystem::path& manifest_path) {
    namespace fs = std::filesystem;
    std::ifstream in(manifest_path);
    if (!in) {
        throw DataError("cannot open manifest " + manifest_path.string());
    }
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw DataError("malformed manifest: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "memsurf-dataset") {
        throw DataError("not a memsurf dataset manifest: " + manifest_path.string());
    }
    SynthDataset ds;
    ds.data.dims = {manifest.at("dims")[0].get<uint16_t>(), manifest.at("dims")[1].get<uint16_t>()};
    ds.data.class_names = manifest.at("classes").get<std::vector<std::string>>();
    ds.options.seed = manifest.value("seed", uint64_t{0});
    ds.mean_event_rate_hz = manifest.at("mean_event_rate_hz").get<double>();
    ds.calibrated_n_e = manifest.at("calibrated_n_e").get<int64_t>();
    const fs::path root = manifest_path.parent_path();
    for (const json& r : manifest.at("recordings")) {
        SynthRecordingInfo info;
        info.id = r.at("id").get<std::string>();
        info.label = r.at("label").get<int>();
        info.spec = spec_from_json(r.at("spec"));
        info.crossing_ms = r.at("crossing_ms").get<double>();
        info.entry_us = r.at("entry_us").get<int64_t>();
        info.exit_us = r.at("exit_us").get<int64_t>();
        for (const json& p : r.at("trajectory")) {
            TrajectoryPoint pt;
            pt.t_ms = p[0].get<int64_t>();
            pt.x_lo = p[1].get<int>();
            pt.x_hi = p[2].get<int>();
            pt.y_lo = p[3].get<int>();
            pt.y_hi = p[4].get<int>();
            pt.cx = p[5].get<double>();
            pt.cy = p[6].get<double>();
            pt.visible = p[7].get<bool>();
            pt.in_view = p[8].get<bool>();
            info.trajectory.push_back(pt);
        }
        Recording rec = read_recording(root / r.at("path").get<std::string>(), ds.data.dims);
        rec.label = info.label;
        rec.meta = info.id;
        ds.data.recordings.push_back(std::move(rec));
        ds.info.push_back(std::move(info));
    }
    return ds;
}

}  // namespace memsurf
