// Experiment CLI: synthetic dataset generation, feature training, tracking,
// the four recognition protocols, throughput benchmarking and surface export.
//
// Exit codes: 0 success, 2 configuration error, 3 data error.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "memsurf/experiment.hpp"
#include "memsurf/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace memsurf;

namespace {

struct CommonOptions {
    std::string data;
    std::string config_file;
    int64_t tau_e = 3000;
    int64_t n_e = 0;  // 0 = auto-calibrate from the dataset rate
    int trials = 0;   // 0 = keep config/default
    uint64_t seed = 0;
    unsigned threads = 0;
    int elm_hidden = 0;
    int skan_k = 0;
    int skan_r = 0;
};

SynthDataset load_any_dataset(const std::string& path) {
    const fs::path p(path);
    if (fs::is_directory(p) && fs::exists(p / "manifest.json")) {
        return load_synth_dataset(p / "manifest.json");
    }
    if (p.filename() == "manifest.json") {
        return load_synth_dataset(p);
    }
    // Plain `<class>/<id>.bin` tree without a manifest (e.g. a real dataset).
    SynthDataset ds;
    SensorDims dims = kAtisDims;
    ds.data = load_dataset(p, dims);
    return ds;
}

ExperimentConfig make_config(const CommonOptions& opt) {
    ExperimentConfig cfg;
    if (!opt.config_file.empty()) {
        std::ifstream in(opt.config_file);
        if (!in) {
            throw ConfigError("cannot open config file " + opt.config_file);
        }
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ConfigError("malformed config file: " + std::string(e.what()));
        }
        cfg.tau_e = j.value("tau_e_us", cfg.tau_e);
        if (j.contains("n_e")) {
            cfg.n_e = j["n_e"].get<int64_t>();
            cfg.auto_n_e = false;
        }
        cfg.trials = j.value("trials", cfg.trials);
        cfg.split_seed = j.value("split_seed", cfg.split_seed);
        cfg.elm_hidden = j.value("elm_hidden", cfg.elm_hidden);
        cfg.feature_train_per_class =
            j.value("feature_train_per_class", cfg.feature_train_per_class);
        if (j.contains("lambda_grid")) {
            cfg.lambda_grid = j["lambda_grid"].get<std::vector<float>>();
        }
        if (j.contains("tracker")) {
            const json& t = j["tracker"];
            cfg.tracker.smoothing_window = t.value("smoothing_window", cfg.tracker.smoothing_window);
            cfg.tracker.threshold = t.value("threshold", cfg.tracker.threshold);
            cfg.tracker.sample_interval_us =
                t.value("sample_interval_us", cfg.tracker.sample_interval_us);
        }
        if (j.contains("skan")) {
            const json& s = j["skan"];
            cfg.skan.neuron_count = s.value("neuron_count", cfg.skan.neuron_count);
            cfg.skan.field_size = s.value("field_size", cfg.skan.field_size);
            cfg.skan.t_max = s.value("t_max", cfg.skan.t_max);
        }
    }
    // CLI overrides win over the config file.
    cfg.tau_e = opt.tau_e;
    if (opt.n_e > 0) {
        cfg.n_e = opt.n_e;
        cfg.auto_n_e = false;
    }
    if (opt.trials > 0) {
        cfg.trials = opt.trials;
    }
    if (opt.seed > 0) {
        cfg.split_seed = opt.seed;
    }
    if (opt.elm_hidden > 0) {
        cfg.elm_hidden = opt.elm_hidden;
    }
    if (opt.skan_k > 0) {
        cfg.skan.neuron_count = opt.skan_k;
    }
    if (opt.skan_r > 0) {
        cfg.skan.field_size = opt.skan_r;
    }
    cfg.threads = opt.threads;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memsurf: event-camera memory surfaces, tracking, feature learning and "
                 "recognition experiments"};
    app.require_subcommand(1);

    CommonOptions opt;

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "Generate a synthetic drop dataset");
    std::string synth_out = "dataset";
    SynthDatasetOptions synth_opt;
    int synth_w = 240, synth_h = 180;
    synth->add_option("--out", synth_out, "Output directory");
    synth->add_option("--classes", synth_opt.classes, "Number of silhouette classes (1-4)");
    synth->add_option("--per-class", synth_opt.per_class, "Recordings per class");
    synth->add_option("--seed", synth_opt.seed, "Dataset seed");
    synth->add_option("--width", synth_w, "Sensor width");
    synth->add_option("--height", synth_h, "Sensor height");
    synth->add_option("--noise-rate", synth_opt.noise_rate, "Spurious events/s");
    synth->add_option("--crossing-ms", synth_opt.crossing_ms_mean, "Mean crossing time (ms)");
    synth->add_option("--crossing-std", synth_opt.crossing_ms_std, "Crossing time std (ms)");
    synth->add_flag("--sweep", synth_opt.sweep, "Uniform crossing-time sweep instead of normal");
    synth->add_option("--sweep-lo", synth_opt.crossing_ms_lo, "Sweep lower bound (ms)");
    synth->add_option("--sweep-hi", synth_opt.crossing_ms_hi, "Sweep upper bound (ms)");

    // ---- train-features ----
    auto* trainf = app.add_subcommand("train-features", "Train a SKAN feature set");
    std::string trainf_surface = "ets";
    std::string trainf_out = "features.json";
    std::string trainf_grids;
    int trainf_per_class = 50;
    trainf->add_option("--data", opt.data, "Dataset directory or manifest")->required();
    trainf->add_option("--surface", trainf_surface, "Surface code (bts/lts/ets/bis/lis/eis)");
    trainf->add_option("--out", trainf_out, "Output network file");
    trainf->add_option("--grids", trainf_grids, "Also write kernel-width grids CSV");
    trainf->add_option("--k", opt.skan_k, "Feature count");
    trainf->add_option("--r", opt.skan_r, "Receptive field side (odd)");
    trainf->add_option("--per-class", trainf_per_class, "Training recordings per class");
    trainf->add_option("--seed", opt.seed, "Seed");
    trainf->add_option("--tau", opt.tau_e, "Time constant (us)");
    trainf->add_option("--ne", opt.n_e, "Index constant (0 = auto)");

    // ---- track ----
    auto* track_cmd = app.add_subcommand("track", "Track recordings and export trajectories");
    std::string track_surface = "bts";
    std::string track_out = "tracks";
    track_cmd->add_option("--data", opt.data, "Dataset directory or manifest")->required();
    track_cmd->add_option("--surface", track_surface, "Surface code");
    track_cmd->add_option("--out", track_out, "Output directory for CSV trajectories");
    track_cmd->add_option("--tau", opt.tau_e, "Time constant (us)");
    track_cmd->add_option("--ne", opt.n_e, "Index constant (0 = auto)");

    // ---- run ----
    auto* run = app.add_subcommand("run", "Run an experiment protocol");
    std::string protocol = "full";
    std::string run_out = "report";
    int run_n = 8;
    std::vector<std::string> run_surfaces;
    std::vector<std::string> run_arms;
    std::vector<int> sweep_sizes = {3, 5, 9, 13, 17};
    std::vector<int> sweep_counts = {1, 5, 10, 25, 50};
    int sweep_sets = 3;
    run->add_option("protocol", protocol,
                    "full | frame-balanced | velocity-segregated | feature-sweep")
        ->required();
    run->add_option("--data", opt.data, "Dataset directory or manifest")->required();
    run->add_option("--config", opt.config_file, "Declarative JSON config");
    run->add_option("--out", run_out, "Report directory");
    run->add_option("--n", run_n, "Frames per recording (balanced / segregated)");
    run->add_option("--trials", opt.trials, "Trial count override");
    run->add_option("--seed", opt.seed, "Split seed override");
    run->add_option("--surfaces", run_surfaces, "Surface codes");
    run->add_option("--arms", run_arms, "Arms (L-E ELM-E L-F ELM-F)");
    run->add_option("--elm-hidden", opt.elm_hidden, "ELM hidden layer size");
    run->add_option("--k", opt.skan_k, "Feature count");
    run->add_option("--r", opt.skan_r, "Receptive field side");
    run->add_option("--tau", opt.tau_e, "Time constant (us)");
    run->add_option("--ne", opt.n_e, "Index constant (0 = auto)");
    run->add_option("--threads", opt.threads, "Worker threads (0 = all)");
    run->add_option("--sizes", sweep_sizes, "Feature sizes for the sweep");
    run->add_option("--counts", sweep_counts, "Feature counts for the sweep");
    run->add_option("--sets", sweep_sets, "Independent feature sets for the sweep");

    // ---- bench ----
    auto* bench = app.add_subcommand("bench", "Throughput benchmark (events/s)");
    std::string bench_surface = "ets";
    bench->add_option("--data", opt.data, "Dataset directory or manifest")->required();
    bench->add_option("--surface", bench_surface, "Surface code");
    bench->add_option("--tau", opt.tau_e, "Time constant (us)");
    bench->add_option("--ne", opt.n_e, "Index constant (0 = auto)");

    // ---- export-surface ----
    auto* exps = app.add_subcommand("export-surface", "Materialize a surface snapshot as CSV");
    std::string exp_surface = "ets";
    std::string exp_out = "surface.csv";
    std::string exp_recording;
    int64_t exp_at_ms = 50;
    exps->add_option("--data", opt.data, "Dataset directory or manifest")->required();
    exps->add_option("--recording", exp_recording, "Recording id (default: first)");
    exps->add_option("--surface", exp_surface, "Surface code");
    exps->add_option("--at-ms", exp_at_ms, "Snapshot instant, ms after the first event");
    exps->add_option("--out", exp_out, "Output CSV");
    exps->add_option("--tau", opt.tau_e, "Time constant (us)");
    exps->add_option("--ne", opt.n_e, "Index constant (0 = auto)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            synth_opt.dims = {static_cast<uint16_t>(synth_w), static_cast<uint16_t>(synth_h)};
            const SynthDataset ds = generate_synth_dataset(synth_opt);
            write_synth_dataset(synth_out, ds);
            int64_t events = 0;
            for (const auto& rec : ds.data.recordings) {
                events += static_cast<int64_t>(rec.events.size());
            }
            std::cout << "wrote " << ds.data.recordings.size() << " recordings (" << events
                      << " events) to " << synth_out << "\n"
                      << "mean ON event rate: " << ds.mean_event_rate_hz
                      << " ev/s, calibrated n_e: " << ds.calibrated_n_e << "\n";
            return 0;
        }

        const SynthDataset ds = load_any_dataset(opt.data);
        ExperimentConfig cfg = make_config(opt);

        if (*trainf) {
            cfg.feature_train_per_class = trainf_per_class;
            // Reuse the experiment seeding so CLI-trained nets match reports.
            SurfaceConfig surface = parse_surface_code(trainf_surface);
            surface.tau_e = cfg.tau_e;
            surface.n_e = cfg.auto_n_e ? ds.calibrated_n_e : cfg.n_e;
            if (surface.n_e <= 0) {
                surface.n_e = 554;
            }
            surface.dims = ds.data.dims;
            std::vector<Recording> on, flipped;
            for (const auto& rec : ds.data.recordings) {
                on.push_back(filter_on_events(rec));
            }
            Rng rng(cfg.split_seed);
            std::vector<std::vector<int>> per_class(ds.data.class_count());
            for (size_t k = 0; k < on.size(); ++k) {
                per_class[static_cast<size_t>(ds.data.recordings[k].label)].push_back(
                    static_cast<int>(k));
            }
            size_t total_take = 0;
            for (auto& ids : per_class) {
                rng.shuffle(ids);
                ids.resize(std::min<size_t>(ids.size(), static_cast<size_t>(trainf_per_class)));
                total_take += ids.size();
            }
            flipped.reserve(total_take);
            std::vector<const Recording*> list;
            for (const auto& ids : per_class) {
                for (int id : ids) {
                    flipped.push_back(flip_horizontal(on[static_cast<size_t>(id)]));
                    list.push_back(&on[static_cast<size_t>(id)]);
                    list.push_back(&flipped.back());
                }
            }
            rng.shuffle(list);
            SkanConfig sc = cfg.skan;
            sc.init_seed = derive_seed(cfg.split_seed, 0xFEA7);
            SkanNetwork net(sc);
            train_features(list, surface, net);
            net.save(trainf_out);
            if (!trainf_grids.empty()) {
                write_feature_grids_csv(trainf_grids, net);
            }
            std::cout << "trained " << sc.neuron_count << " features (" << sc.field_size << "x"
                      << sc.field_size << ") on " << list.size() << " streams -> " << trainf_out
                      << "\n";
            return 0;
        }

        if (*track_cmd) {
            SurfaceConfig surface = parse_surface_code(track_surface);
            surface.tau_e = cfg.tau_e;
            surface.n_e = cfg.auto_n_e ? std::max<int64_t>(ds.calibrated_n_e, 1) : cfg.n_e;
            surface.dims = ds.data.dims;
            fs::create_directories(track_out);
            for (const auto& rec : ds.data.recordings) {
                const auto states = track(rec, surface, cfg.tracker);
                std::string name = rec.meta;
                std::replace(name.begin(), name.end(), '/', '_');
                write_track_csv(fs::path(track_out) / (name + ".csv"), rec.meta, states);
            }
            std::cout << "wrote " << ds.data.recordings.size() << " trajectories to " << track_out
                      << "\n";
            return 0;
        }

        if (*run) {
            ProtocolResult result;
            if (protocol == "full") {
                result = run_full(ds, cfg,
                                  run_surfaces.empty() ? kAllSurfaceCodes : run_surfaces);
            } else if (protocol == "frame-balanced") {
                result = run_frame_balanced(
                    ds, cfg, run_n,
                    run_surfaces.empty() ? std::vector<std::string>{"eis", "ets"} : run_surfaces,
                    run_arms.empty() ? std::vector<std::string>{"L-E", "L-F"} : run_arms);
            } else if (protocol == "velocity-segregated") {
                result = run_velocity_segregated(
                    ds, cfg, run_n,
                    run_surfaces.empty() ? std::vector<std::string>{"eis", "ets"} : run_surfaces,
                    run_arms.empty() ? std::vector<std::string>{"L-E", "L-F"} : run_arms);
            } else if (protocol == "feature-sweep") {
                result = run_feature_sweep(ds, cfg, sweep_sizes, sweep_counts, sweep_sets);
            } else {
                throw ConfigError("unknown protocol '" + protocol + "'");
            }
            write_report(run_out, result);
            std::cout << "protocol " << result.protocol << " done; report in " << run_out << "\n";
            for (const auto& [key, series] : result.frame_acc) {
                std::cout << "  " << key << ": median frame accuracy "
                          << result.median_frame_acc(key) << "\n";
            }
            return 0;
        }

        if (*bench) {
            const BenchResult r = bench_throughput(ds, bench_surface, cfg);
            std::cout << "events: " << r.events << "\n"
                      << "absorb only:          " << static_cast<int64_t>(r.absorb_eps)
                      << " ev/s\n"
                      << "absorb+track:         " << static_cast<int64_t>(r.track_eps)
                      << " ev/s\n"
                      << "absorb+track+features: " << static_cast<int64_t>(r.full_eps)
                      << " ev/s\n"
                      << r.meta.dump(1) << "\n";
            return 0;
        }

        if (*exps) {
            SurfaceConfig surface = parse_surface_code(exp_surface);
            surface.tau_e = cfg.tau_e;
            surface.n_e = cfg.auto_n_e ? std::max<int64_t>(ds.calibrated_n_e, 1) : cfg.n_e;
            surface.dims = ds.data.dims;
            const Recording* rec = nullptr;
            for (const auto& r : ds.data.recordings) {
                if (exp_recording.empty() || r.meta == exp_recording) {
                    rec = &r;
                    break;
                }
            }
            if (!rec) {
                throw DataError("recording '" + exp_recording + "' not found");
            }
            const Recording on = filter_on_events(*rec);
            if (on.events.empty()) {
                throw DataError("recording has no ON events");
            }
            MemorySurface s(surface);
            const int64_t cutoff = on.events.front().t + exp_at_ms * 1000;
            for (const Event& ev : on.events) {
                if (ev.t > cutoff) {
                    break;
                }
                s.absorb(ev);
            }
            const int64_t now = surface.basis == DecayBasis::kTime
                                    ? cutoff
                                    : std::max<int64_t>(s.last_absorbed_i(), 0);
            const std::vector<double> grid = s.to_matrix(now);
            std::ofstream out(exp_out);
            if (!out) {
                throw DataError("cannot write " + exp_out);
            }
            for (int y = 0; y < s.height(); ++y) {
                for (int x = 0; x < s.width(); ++x) {
                    out << grid[static_cast<size_t>(y) * s.width() + x];
                    out << (x + 1 == s.width() ? '\n' : ',');
                }
            }
            std::cout << "wrote " << s.width() << "x" << s.height() << " snapshot to " << exp_out
                      << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
