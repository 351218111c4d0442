#include "memsurf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>

#include "memsurf/util.hpp"

namespace memsurf {

using json = nlohmann::json;

void ExperimentConfig::validate() const {
    if (tau_e <= 0) {
        throw ConfigError("tau_e must be positive");
    }
    if (!auto_n_e && n_e <= 0) {
        throw ConfigError("n_e must be positive");
    }
    if (trials < 1) {
        throw ConfigError("trials must be >= 1");
    }
    if (lambda_grid.empty()) {
        throw ConfigError("lambda grid must be non-empty");
    }
    for (float l : lambda_grid) {
        if (l <= 0) {
            throw ConfigError("lambda grid values must be > 0");
        }
    }
    if (validation_fraction <= 0 || validation_fraction >= 1) {
        throw ConfigError("validation fraction must be in (0,1)");
    }
    tracker.validate();
    pool.validate();
    skan.validate();
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) {
        throw Error("median of empty series");
    }
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct Prepared {
    const SynthDataset* ds = nullptr;
    std::vector<Recording> on;       // ON-filtered, dense indices
    std::vector<Recording> flipped;  // left-right flips, for feature training
    std::vector<int> labels;
    int classes = 0;
    int64_t n_e = 0;
    double mean_rate_hz = 0;

    SurfaceConfig surface(const std::string& code, const ExperimentConfig& cfg) const {
        SurfaceConfig s = parse_surface_code(code);
        s.tau_e = cfg.tau_e;
        s.n_e = n_e;
        s.dims = ds->data.dims;
        return s;
    }
};

Prepared prepare(const SynthDataset& ds, const ExperimentConfig& cfg) {
    if (ds.data.recordings.empty()) {
        throw DataError("dataset has no recordings");
    }
    Prepared p;
    p.ds = &ds;
    p.classes = static_cast<int>(ds.data.class_count());
    p.on.reserve(ds.data.recordings.size());
    for (const Recording& rec : ds.data.recordings) {
        if (rec.label < 0 || rec.label >= p.classes) {
            throw DataError("recording '" + rec.meta + "' has no valid label");
        }
        p.on.push_back(filter_on_events(rec));
        p.flipped.push_back(flip_horizontal(p.on.back()));
        p.labels.push_back(rec.label);
    }
    std::vector<int> per_class(static_cast<size_t>(p.classes), 0);
    for (int l : p.labels) {
        ++per_class[static_cast<size_t>(l)];
    }
    for (int c = 0; c < p.classes; ++c) {
        if (per_class[static_cast<size_t>(c)] < 2) {
            throw DataError("class " + ds.data.class_names[static_cast<size_t>(c)] +
                            " has fewer than 2 recordings");
        }
    }
    p.mean_rate_hz = ds.mean_event_rate_hz;
    if (p.mean_rate_hz <= 0) {
        double sum = 0;
        int counted = 0;
        for (const Recording& rec : p.on) {
            if (rec.events.size() > 1 && rec.duration_us() > 0) {
                sum += static_cast<double>(rec.events.size()) /
                       (static_cast<double>(rec.duration_us()) * 1e-6);
                ++counted;
            }
        }
        if (!counted) {
            throw DataError("cannot estimate dataset event rate");
        }
        p.mean_rate_hz = sum / counted;
    }
    p.n_e = cfg.auto_n_e
                ? std::max<int64_t>(
                      1, std::llround(p.mean_rate_hz * static_cast<double>(cfg.tau_e) * 1e-6))
                : cfg.n_e;
    return p;
}

/// Stratified recording-level 50/50 split.
std::pair<std::vector<int>, std::vector<int>> split_recordings(const std::vector<int>& labels,
                                                               int classes, Rng& rng) {
    std::vector<std::vector<int>> per_class(static_cast<size_t>(classes));
    for (size_t k = 0; k < labels.size(); ++k) {
        per_class[static_cast<size_t>(labels[k])].push_back(static_cast<int>(k));
    }
    std::vector<int> train, test;
    for (auto& ids : per_class) {
        rng.shuffle(ids);
        const size_t half = ids.size() / 2;
        train.insert(train.end(), ids.begin(), ids.begin() + half);
        test.insert(test.end(), ids.begin() + half, ids.end());
    }
    std::sort(train.begin(), train.end());
    std::sort(test.begin(), test.end());
    return {train, test};
}

std::vector<const Recording*> feature_training_list(const Prepared& p,
                                                    const std::vector<int>& train_idx,
                                                    int per_class_cap, Rng& rng) {
    std::vector<std::vector<int>> per_class(static_cast<size_t>(p.classes));
    for (int idx : train_idx) {
        per_class[static_cast<size_t>(p.labels[static_cast<size_t>(idx)])].push_back(idx);
    }
    std::vector<const Recording*> list;
    for (auto& ids : per_class) {
        rng.shuffle(ids);
        const size_t take = std::min<size_t>(ids.size(), static_cast<size_t>(per_class_cap));
        for (size_t k = 0; k < take; ++k) {
            list.push_back(&p.on[static_cast<size_t>(ids[k])]);
            list.push_back(&p.flipped[static_cast<size_t>(ids[k])]);
        }
    }
    rng.shuffle(list);
    return list;
}

struct BuiltFrames {
    std::vector<FeatureFrame> event_frames;
    std::vector<FeatureFrame> feature_frames;
    int skipped = 0;
};

BuiltFrames build_set(const Prepared& p, const std::vector<int>& indices,
                      const FrameBuildConfig& fb, const SkanNetwork* net, bool want_event) {
    BuiltFrames out;
    SkanScratch scratch;
    for (int idx : indices) {
        RecordingFrames rf = build_frames(p.on[static_cast<size_t>(idx)], idx, fb,
                                          net, net ? &scratch : nullptr, want_event);
        out.skipped += rf.skipped;
        std::move(rf.event_frames.begin(), rf.event_frames.end(),
                  std::back_inserter(out.event_frames));
        std::move(rf.feature_frames.begin(), rf.feature_frames.end(),
                  std::back_inserter(out.feature_frames));
    }
    return out;
}

struct FrameMatrix {
    Eigen::MatrixXf X;
    std::vector<int> labels;
    std::vector<int> recording_ids;
};

FrameMatrix to_matrix(const std::vector<FeatureFrame>& frames,
                      const std::vector<size_t>* subset = nullptr) {
    FrameMatrix m;
    const size_t rows = subset ? subset->size() : frames.size();
    if (rows == 0) {
        return m;
    }
    const size_t dim = frames[subset ? (*subset)[0] : 0].values.size();
    m.X.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    m.labels.reserve(rows);
    m.recording_ids.reserve(rows);
    for (size_t r = 0; r < rows; ++r) {
        const FeatureFrame& f = frames[subset ? (*subset)[r] : r];
        if (f.values.size() != dim) {
            throw Error("inconsistent frame vector length");
        }
        for (size_t c = 0; c < dim; ++c) {
            m.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f.values[c];
        }
        m.labels.push_back(f.label);
        m.recording_ids.push_back(f.recording_index);
    }
    return m;
}

struct ArmSpec {
    std::string name;
    bool feature_mode = false;
    bool elm = false;
};

ArmSpec parse_arm(const std::string& name) {
    if (name == "L-E") return {name, false, false};
    if (name == "ELM-E") return {name, false, true};
    if (name == "L-F") return {name, true, false};
    if (name == "ELM-F") return {name, true, true};
    throw ConfigError("unknown arm '" + name + "' (expected L-E, ELM-E, L-F, ELM-F)");
}

ClassifierModel train_arm(const ArmSpec& arm, const FrameMatrix& train, int classes,
                          float lambda, int hidden, uint64_t elm_seed) {
    if (arm.elm) {
        return train_elm(train.X, train.labels, classes, hidden, lambda, elm_seed);
    }
    return train_linear(train.X, train.labels, classes, lambda);
}

/// Recording-level validation split over the training frames; picks the
/// grid lambda with the best per-frame validation accuracy (ties: first).
float select_lambda(const ArmSpec& arm, const FrameMatrix& train, int classes,
                    const ExperimentConfig& cfg, uint64_t elm_seed, Rng& rng) {
    std::vector<int> recs(train.recording_ids.begin(), train.recording_ids.end());
    std::sort(recs.begin(), recs.end());
    recs.erase(std::unique(recs.begin(), recs.end()), recs.end());
    if (recs.size() < 4 || cfg.lambda_grid.size() == 1) {
        return cfg.lambda_grid.front();
    }
    rng.shuffle(recs);
    const size_t val_count =
        std::max<size_t>(1, static_cast<size_t>(std::floor(recs.size() * cfg.validation_fraction)));
    std::set<int> val_set(recs.begin(), recs.begin() + val_count);
    std::vector<size_t> sub_rows, val_rows;
    for (size_t r = 0; r < train.recording_ids.size(); ++r) {
        (val_set.count(train.recording_ids[r]) ? val_rows : sub_rows).push_back(r);
    }
    std::vector<int> sub_labels, val_labels;
    Eigen::MatrixXf sub_X(static_cast<Eigen::Index>(sub_rows.size()), train.X.cols());
    for (size_t r = 0; r < sub_rows.size(); ++r) {
        sub_X.row(static_cast<Eigen::Index>(r)) = train.X.row(static_cast<Eigen::Index>(sub_rows[r]));
        sub_labels.push_back(train.labels[sub_rows[r]]);
    }
    Eigen::MatrixXf val_X(static_cast<Eigen::Index>(val_rows.size()), train.X.cols());
    for (size_t r = 0; r < val_rows.size(); ++r) {
        val_X.row(static_cast<Eigen::Index>(r)) = train.X.row(static_cast<Eigen::Index>(val_rows[r]));
        val_labels.push_back(train.labels[val_rows[r]]);
    }
    if (val_rows.empty() || sub_rows.empty()) {
        return cfg.lambda_grid.front();
    }
    float best_lambda = cfg.lambda_grid.front();
    double best_acc = -1;
    for (float lambda : cfg.lambda_grid) {
        ClassifierModel model;
        try {
            FrameMatrix sub{sub_X, sub_labels, {}};
            model = train_arm(arm, sub, classes, lambda, cfg.elm_hidden, elm_seed);
        } catch (const DataError&) {
            continue;  // a class fell out of the sub-split
        }
        const std::vector<int> preds = predict_frames(model, val_X);
        int hits = 0;
        for (size_t r = 0; r < preds.size(); ++r) {
            hits += preds[r] == val_labels[r];
        }
        const double acc = static_cast<double>(hits) / static_cast<double>(preds.size());
        if (acc > best_acc) {
            best_acc = acc;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

json config_to_json(const ExperimentConfig& c, const Prepared& p) {
    return json{{"tau_e_us", c.tau_e},
                {"n_e", p.n_e},
                {"auto_n_e", c.auto_n_e},
                {"tracker",
                 {{"smoothing_window", c.tracker.smoothing_window},
                  {"threshold", c.tracker.threshold},
                  {"sample_interval_us", c.tracker.sample_interval_us}}},
                {"pool",
                 {{"resample_len", c.pool.resample_len},
                  {"max_normalize", c.pool.max_normalize}}},
                {"skan",
                 {{"neuron_count", c.skan.neuron_count},
                  {"field_size", c.skan.field_size},
                  {"t_max", c.skan.t_max},
                  {"w_min", c.skan.w_min},
                  {"w_max", c.skan.w_max},
                  {"delta_w", c.skan.delta_w},
                  {"theta_up", c.skan.theta_up},
                  {"theta_init_frac", c.skan.theta_init_frac},
                  {"theta_down_frac", c.skan.theta_down_frac}}},
                {"elm_hidden", c.elm_hidden},
                {"lambda_grid", c.lambda_grid},
                {"trials", c.trials},
                {"split_seed", c.split_seed},
                {"feature_train_per_class", c.feature_train_per_class},
                {"validation_fraction", c.validation_fraction},
                {"mean_event_rate_hz", p.mean_rate_hz},
                {"recordings", p.on.size()},
                {"classes", p.classes},
                {"code_version", kVersion}};
}

struct TrialOutcome {
    double frame_acc = 0;
    double drop_acc = 0;
    int frames = 0;
    int drops = 0;
    int skipped = 0;
    float lambda = 0;
    std::vector<int> misclassified;
    Eigen::MatrixXd confusion;
};

json outcome_to_json(const std::string& surface, const std::string& arm, int trial,
                     const TrialOutcome& o, const Prepared& p) {
    json mis = json::array();
    for (int idx : o.misclassified) {
        mis.push_back(p.ds->data.recordings[static_cast<size_t>(idx)].meta);
    }
    return json{{"surface", surface},     {"arm", arm},
                {"trial", trial},         {"frame_accuracy", o.frame_acc},
                {"drop_accuracy", o.drop_acc}, {"frames", o.frames},
                {"drops", o.drops},       {"skipped_frames", o.skipped},
                {"lambda", o.lambda},     {"misclassified", mis}};
}

void aggregate_into(ProtocolResult& result, const std::string& key,
                    const std::vector<TrialOutcome>& outcomes) {
    auto& f = result.frame_acc[key];
    auto& d = result.drop_acc[key];
    for (const TrialOutcome& o : outcomes) {
        f.push_back(o.frame_acc);
        d.push_back(o.drop_acc);
    }
    result.report["aggregates"][key] = {
        {"frame_median", median_of(f)}, {"frame_mean", mean_of(f)}, {"frame_std", std_of(f)},
        {"drop_median", median_of(d)},  {"drop_mean", mean_of(d)},  {"drop_std", std_of(d)}};
}

}  // namespace

double ProtocolResult::median_frame_acc(const std::string& key) const {
    return median_of(frame_acc.at(key));
}
double ProtocolResult::median_drop_acc(const std::string& key) const {
    return median_of(drop_acc.at(key));
}
double ProtocolResult::mean_frame_acc(const std::string& key) const {
    return mean_of(frame_acc.at(key));
}

ProtocolResult run_full(const SynthDataset& ds, const ExperimentConfig& config,
                        const std::vector<std::string>& surfaces) {
    config.validate();
    const Prepared p = prepare(ds, config);
    const std::vector<ArmSpec> arms = {parse_arm("L-E"), parse_arm("ELM-E"), parse_arm("L-F"),
                                       parse_arm("ELM-F")};
    const int T = config.trials;
    const size_t S = surfaces.size();

    // outcomes[s][arm][trial]
    std::vector<std::vector<std::vector<TrialOutcome>>> outcomes(
        S, std::vector<std::vector<TrialOutcome>>(arms.size(),
                                                  std::vector<TrialOutcome>(static_cast<size_t>(T))));
    std::vector<std::vector<float>> lambda_table(S, std::vector<float>(arms.size(), 0.f));

    auto run_trial = [&](size_t s, int trial, bool choose_lambda) {
        const SurfaceConfig surface = p.surface(surfaces[s], config);
        const uint64_t trial_seed = derive_seed(config.split_seed, static_cast<uint64_t>(trial));
        Rng rng(trial_seed);
        const auto [train_idx, test_idx] = split_recordings(p.labels, p.classes, rng);
        const auto flist =
            feature_training_list(p, train_idx, config.feature_train_per_class, rng);

        SkanConfig sc = config.skan;
        sc.init_seed = derive_seed(trial_seed, 0xFEA7);
        SkanNetwork net(sc);
        train_features(flist, surface, net);

        const FrameBuildConfig fb{surface, config.tracker, config.pool};
        const BuiltFrames train_built = build_set(p, train_idx, fb, &net, true);
        const BuiltFrames test_built = build_set(p, test_idx, fb, &net, true);

        const FrameMatrix train_e = to_matrix(train_built.event_frames);
        const FrameMatrix train_f = to_matrix(train_built.feature_frames);
        const FrameMatrix test_e = to_matrix(test_built.event_frames);
        const FrameMatrix test_f = to_matrix(test_built.feature_frames);

        for (size_t a = 0; a < arms.size(); ++a) {
            const ArmSpec& arm = arms[a];
            const FrameMatrix& train = arm.feature_mode ? train_f : train_e;
            const FrameMatrix& test = arm.feature_mode ? test_f : test_e;
            const uint64_t elm_seed = derive_seed(trial_seed, 100 + a);
            float lambda;
            if (choose_lambda) {
                lambda = select_lambda(arm, train, p.classes, config, elm_seed, rng);
                lambda_table[s][a] = lambda;
            } else {
                lambda = lambda_table[s][a];
            }
            const ClassifierModel model =
                train_arm(arm, train, p.classes, lambda, config.elm_hidden, elm_seed);
            const Evaluation eval =
                evaluate(model, test.X, test.labels, test.recording_ids, p.classes);
            TrialOutcome& o = outcomes[s][a][static_cast<size_t>(trial)];
            o.frame_acc = eval.per_frame_accuracy;
            o.drop_acc = eval.per_drop_accuracy;
            o.frames = eval.frames;
            o.drops = eval.drops;
            o.skipped = train_built.skipped + test_built.skipped;
            o.lambda = lambda;
            o.misclassified = eval.misclassified_recordings;
            o.confusion = eval.confusion_frames;
        }
    };

    // Trial 0 selects each arm's lambda on a validation split; later trials
    // reuse it, mirroring a one-time regularization choice.
    parallel_tasks(S, [&](size_t s) { run_trial(s, 0, true); }, config.threads);
    if (T > 1) {
        parallel_tasks(S * static_cast<size_t>(T - 1),
                       [&](size_t k) {
                           const size_t s = k / static_cast<size_t>(T - 1);
                           const int trial = 1 + static_cast<int>(k % static_cast<size_t>(T - 1));
                           run_trial(s, trial, false);
                       },
                       config.threads);
    }

    // Dataset-level activation-velocity slopes per surface (Fig 9 analogue).
    std::vector<VelocityActivationFit> fits(S);
    std::vector<std::string> fit_errors(S);
    parallel_tasks(S, [&](size_t s) {
        std::vector<const Recording*> recs;
        for (const Recording& r : p.ds->data.recordings) {
            recs.push_back(&r);
        }
        try {
            fits[s] = activation_velocity_fit(recs, p.labels, p.classes,
                                              p.surface(surfaces[s], config), config.tracker);
        } catch (const DataError& e) {
            fit_errors[s] = e.what();
        }
    }, config.threads);

    ProtocolResult result;
    result.protocol = "full";
    result.report["protocol"] = "full";
    result.report["config"] = config_to_json(config, p);
    result.report["surfaces"] = surfaces;
    json trials_json = json::array();
    for (size_t s = 0; s < S; ++s) {
        for (size_t a = 0; a < arms.size(); ++a) {
            const std::string key = surfaces[s] + "/" + arms[a].name;
            aggregate_into(result, key, outcomes[s][a]);
            Eigen::MatrixXd confusion = Eigen::MatrixXd::Zero(p.classes, p.classes);
            for (int t = 0; t < T; ++t) {
                trials_json.push_back(
                    outcome_to_json(surfaces[s], arms[a].name, t, outcomes[s][a][static_cast<size_t>(t)], p));
                confusion += outcomes[s][a][static_cast<size_t>(t)].confusion;
            }
            json conf = json::array();
            for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
                json row = json::array();
                for (Eigen::Index c = 0; c < confusion.cols(); ++c) {
                    row.push_back(confusion(r, c));
                }
                conf.push_back(row);
            }
            result.report["confusion_frames"][key] = conf;
            result.report["lambda"][key] = lambda_table[s][a];
        }
        // Median error ratio of the ELM over the linear classifier (E and F).
        for (const auto& [mode, elm_arm, lin_arm] :
             {std::tuple{"E", "ELM-E", "L-E"}, std::tuple{"F", "ELM-F", "L-F"}}) {
            std::vector<double> ratios;
            for (int t = 0; t < T; ++t) {
                const double le =
                    1.0 - result.frame_acc[surfaces[s] + "/" + elm_arm][static_cast<size_t>(t)];
                const double ll =
                    1.0 - result.frame_acc[surfaces[s] + "/" + lin_arm][static_cast<size_t>(t)];
                if (ll > 0) {
                    ratios.push_back(le / ll);
                }
            }
            result.report["elm_error_ratio"][surfaces[s]][mode] =
                ratios.empty() ? json(nullptr) : json(median_of(ratios));
        }
        if (fit_errors[s].empty()) {
            result.report["activation_velocity_slopes"][surfaces[s]] = fits[s].slope_per_class;
        } else {
            result.report["activation_velocity_slopes"][surfaces[s]] = fit_errors[s];
        }
    }
    result.report["trials"] = trials_json;
    return result;
}

namespace {

/// Frame subsetting shared by the balanced and segregated protocols.
/// mode: 0 = n uniform random frames, 1 = n first frames, 2 = n last frames.
std::vector<size_t> select_frames_per_recording(const std::vector<FeatureFrame>& frames, int n,
                                                int mode, Rng& rng,
                                                std::vector<int>* excluded) {
    std::map<int, std::vector<size_t>> by_rec;
    for (size_t k = 0; k < frames.size(); ++k) {
        by_rec[frames[k].recording_index].push_back(k);
    }
    std::vector<size_t> rows;
    for (auto& [rec, idx] : by_rec) {
        if (static_cast<int>(idx.size()) < n) {
            if (excluded) {
                excluded->push_back(rec);
            }
            continue;
        }
        if (mode == 0) {
            rng.shuffle(idx);
            idx.resize(static_cast<size_t>(n));
            std::sort(idx.begin(), idx.end());
        } else if (mode == 1) {
            idx.resize(static_cast<size_t>(n));
        } else {
            idx.erase(idx.begin(), idx.end() - n);
        }
        rows.insert(rows.end(), idx.begin(), idx.end());
    }
    return rows;
}

}  // namespace

ProtocolResult run_frame_balanced(const SynthDataset& ds, const ExperimentConfig& config, int n,
                                  const std::vector<std::string>& surfaces,
                                  const std::vector<std::string>& arm_names) {
    config.validate();
    if (n < 1) {
        throw ConfigError("frame-balanced n must be >= 1");
    }
    const Prepared p = prepare(ds, config);
    std::vector<ArmSpec> arms;
    for (const auto& name : arm_names) {
        arms.push_back(parse_arm(name));
    }
    const bool need_features =
        std::any_of(arms.begin(), arms.end(), [](const ArmSpec& a) { return a.feature_mode; });
    const int T = config.trials;
    const size_t S = surfaces.size();

    std::vector<std::vector<std::vector<TrialOutcome>>> outcomes(
        S, std::vector<std::vector<TrialOutcome>>(arms.size(),
                                                  std::vector<TrialOutcome>(static_cast<size_t>(T))));
    std::vector<std::vector<float>> lambda_table(S, std::vector<float>(arms.size(), 0.f));
    std::vector<std::set<std::string>> excluded_ids(S);

    auto run_trial = [&](size_t s, int trial, bool choose_lambda) {
        const SurfaceConfig surface = p.surface(surfaces[s], config);
        const uint64_t trial_seed = derive_seed(config.split_seed, static_cast<uint64_t>(trial));
        Rng rng(trial_seed);
        const auto [train_idx, test_idx] = split_recordings(p.labels, p.classes, rng);

        SkanNetwork* net_ptr = nullptr;
        std::optional<SkanNetwork> net;
        if (need_features) {
            const auto flist =
                feature_training_list(p, train_idx, config.feature_train_per_class, rng);
            SkanConfig sc = config.skan;
            sc.init_seed = derive_seed(trial_seed, 0xFEA7);
            net.emplace(sc);
            train_features(flist, surface, *net);
            net_ptr = &*net;
        }
        const FrameBuildConfig fb{surface, config.tracker, config.pool};
        const BuiltFrames train_built = build_set(p, train_idx, fb, net_ptr, true);
        const BuiltFrames test_built = build_set(p, test_idx, fb, net_ptr, true);

        std::vector<int> excluded;
        const std::vector<size_t> e_rows =
            select_frames_per_recording(train_built.event_frames, n, 0, rng, &excluded);
        // The same frame instants are selected for the F arms: frames share
        // (recording, frame_index) across modes.
        std::vector<size_t> f_rows;
        if (need_features) {
            f_rows = e_rows;  // identical layout: one E and one F frame per instant
        }
        for (int rec : excluded) {
            excluded_ids[s].insert(p.ds->data.recordings[static_cast<size_t>(rec)].meta);
        }
        if (e_rows.empty()) {
            throw DataError("no training recording has " + std::to_string(n) + " valid frames");
        }

        const FrameMatrix train_e = to_matrix(train_built.event_frames, &e_rows);
        const FrameMatrix train_f =
            need_features ? to_matrix(train_built.feature_frames, &f_rows) : FrameMatrix{};
        const FrameMatrix test_e = to_matrix(test_built.event_frames);
        const FrameMatrix test_f =
            need_features ? to_matrix(test_built.feature_frames) : FrameMatrix{};

        for (size_t a = 0; a < arms.size(); ++a) {
            const ArmSpec& arm = arms[a];
            const FrameMatrix& train = arm.feature_mode ? train_f : train_e;
            const FrameMatrix& test = arm.feature_mode ? test_f : test_e;
            const uint64_t elm_seed = derive_seed(trial_seed, 100 + a);
            float lambda;
            if (choose_lambda) {
                lambda = select_lambda(arm, train, p.classes, config, elm_seed, rng);
                lambda_table[s][a] = lambda;
            } else {
                lambda = lambda_table[s][a];
            }
            const ClassifierModel model =
                train_arm(arm, train, p.classes, lambda, config.elm_hidden, elm_seed);
            const Evaluation eval =
                evaluate(model, test.X, test.labels, test.recording_ids, p.classes);
            TrialOutcome& o = outcomes[s][a][static_cast<size_t>(trial)];
            o.frame_acc = eval.per_frame_accuracy;
            o.drop_acc = eval.per_drop_accuracy;
            o.frames = eval.frames;
            o.drops = eval.drops;
            o.lambda = lambda;
            o.misclassified = eval.misclassified_recordings;
        }
    };

    parallel_tasks(S, [&](size_t s) { run_trial(s, 0, true); }, config.threads);
    if (T > 1) {
        parallel_tasks(S * static_cast<size_t>(T - 1),
                       [&](size_t k) {
                           const size_t s = k / static_cast<size_t>(T - 1);
                           const int trial = 1 + static_cast<int>(k % static_cast<size_t>(T - 1));
                           run_trial(s, trial, false);
                       },
                       config.threads);
    }

    ProtocolResult result;
    result.protocol = "frame_balanced";
    result.report["protocol"] = "frame_balanced";
    result.report["n_frames"] = n;
    result.report["config"] = config_to_json(config, p);
    result.report["surfaces"] = surfaces;
    json trials_json = json::array();
    for (size_t s = 0; s < S; ++s) {
        for (size_t a = 0; a < arms.size(); ++a) {
            const std::string key = surfaces[s] + "/" + arms[a].name;
            aggregate_into(result, key, outcomes[s][a]);
            result.report["lambda"][key] = lambda_table[s][a];
            for (int t = 0; t < T; ++t) {
                trials_json.push_back(outcome_to_json(surfaces[s], arms[a].name, t,
                                                      outcomes[s][a][static_cast<size_t>(t)], p));
            }
        }
        result.report["excluded_recordings"][surfaces[s]] =
            std::vector<std::string>(excluded_ids[s].begin(), excluded_ids[s].end());
    }
    result.report["trials"] = trials_json;
    return result;
}

ProtocolResult run_velocity_segregated(const SynthDataset& ds, const ExperimentConfig& config,
                                       int n, const std::vector<std::string>& surfaces,
                                       const std::vector<std::string>& arm_names) {
    config.validate();
    if (n < 1) {
        throw ConfigError("velocity-segregated n must be >= 1");
    }
    const Prepared p = prepare(ds, config);
    std::vector<ArmSpec> arms;
    for (const auto& name : arm_names) {
        arms.push_back(parse_arm(name));
    }
    const bool need_features =
        std::any_of(arms.begin(), arms.end(), [](const ArmSpec& a) { return a.feature_mode; });

    // Tracker-estimated vertical velocity at the temporal midpoint of each
    // recording, with a fixed reference surface.
    const SurfaceConfig reference = p.surface("ets", config);
    std::vector<double> velocities(p.on.size(), 0.0);
    std::vector<std::string> velocity_errors(p.on.size());
    parallel_tasks(p.on.size(), [&](size_t k) {
        const Recording& rec = p.ds->data.recordings[k];
        try {
            const auto states = track(rec, reference, config.tracker);
            velocities[k] =
                midpoint_velocity(states, rec.events.front().t, rec.events.back().t);
        } catch (const std::exception& e) {
            velocity_errors[k] = e.what();
        }
    }, config.threads);
    for (size_t k = 0; k < velocity_errors.size(); ++k) {
        if (!velocity_errors[k].empty()) {
            throw DataError("midpoint velocity unavailable for '" + p.ds->data.recordings[k].meta +
                            "': " + velocity_errors[k]);
        }
    }
    std::vector<int> order(p.on.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return velocities[static_cast<size_t>(a)] != velocities[static_cast<size_t>(b)]
                   ? velocities[static_cast<size_t>(a)] < velocities[static_cast<size_t>(b)]
                   : a < b;
    });
    const std::vector<int> slow(order.begin(), order.begin() + order.size() / 2);
    const std::vector<int> fast(order.begin() + order.size() / 2, order.end());

    const int T = config.trials;
    const size_t S = surfaces.size();
    std::vector<std::vector<std::vector<TrialOutcome>>> outcomes(
        S, std::vector<std::vector<TrialOutcome>>(arms.size(),
                                                  std::vector<TrialOutcome>(static_cast<size_t>(T))));
    std::vector<std::vector<float>> lambda_table(S, std::vector<float>(arms.size(), 0.f));
    std::vector<std::set<std::string>> excluded_ids(S);

    auto run_trial = [&](size_t s, int trial, bool choose_lambda) {
        const SurfaceConfig surface = p.surface(surfaces[s], config);
        const uint64_t trial_seed = derive_seed(config.split_seed, static_cast<uint64_t>(trial));
        Rng rng(trial_seed);

        SkanNetwork* net_ptr = nullptr;
        std::optional<SkanNetwork> net;
        if (need_features) {
            const auto flist = feature_training_list(p, slow, config.feature_train_per_class, rng);
            SkanConfig sc = config.skan;
            sc.init_seed = derive_seed(trial_seed, 0xFEA7);
            net.emplace(sc);
            train_features(flist, surface, *net);
            net_ptr = &*net;
        }
        const FrameBuildConfig fb{surface, config.tracker, config.pool};
        const BuiltFrames slow_built = build_set(p, slow, fb, net_ptr, true);
        const BuiltFrames fast_built = build_set(p, fast, fb, net_ptr, true);

        std::vector<int> excluded;
        const std::vector<size_t> train_rows =
            select_frames_per_recording(slow_built.event_frames, n, 1, rng, &excluded);
        const std::vector<size_t> test_rows =
            select_frames_per_recording(fast_built.event_frames, n, 2, rng, &excluded);
        for (int rec : excluded) {
            excluded_ids[s].insert(p.ds->data.recordings[static_cast<size_t>(rec)].meta);
        }
        if (train_rows.empty() || test_rows.empty()) {
            throw DataError("no recording has " + std::to_string(n) + " valid frames");
        }

        const FrameMatrix train_e = to_matrix(slow_built.event_frames, &train_rows);
        const FrameMatrix test_e = to_matrix(fast_built.event_frames, &test_rows);
        const FrameMatrix train_f =
            need_features ? to_matrix(slow_built.feature_frames, &train_rows) : FrameMatrix{};
        const FrameMatrix test_f =
            need_features ? to_matrix(fast_built.feature_frames, &test_rows) : FrameMatrix{};

        for (size_t a = 0; a < arms.size(); ++a) {
            const ArmSpec& arm = arms[a];
            const FrameMatrix& train = arm.feature_mode ? train_f : train_e;
            const FrameMatrix& test = arm.feature_mode ? test_f : test_e;
            const uint64_t elm_seed = derive_seed(trial_seed, 100 + a);
            float lambda;
            if (choose_lambda) {
                lambda = select_lambda(arm, train, p.classes, config, elm_seed, rng);
                lambda_table[s][a] = lambda;
            } else {
                lambda = lambda_table[s][a];
            }
            const ClassifierModel model =
                train_arm(arm, train, p.classes, lambda, config.elm_hidden, elm_seed);
            const Evaluation eval =
                evaluate(model, test.X, test.labels, test.recording_ids, p.classes);
            TrialOutcome& o = outcomes[s][a][static_cast<size_t>(trial)];
            o.frame_acc = eval.per_frame_accuracy;
            o.drop_acc = eval.per_drop_accuracy;
            o.frames = eval.frames;
            o.drops = eval.drops;
            o.lambda = lambda;
        }
    };

    parallel_tasks(S, [&](size_t s) { run_trial(s, 0, true); }, config.threads);
    if (T > 1) {
        parallel_tasks(S * static_cast<size_t>(T - 1),
                       [&](size_t k) {
                           const size_t s = k / static_cast<size_t>(T - 1);
                           const int trial = 1 + static_cast<int>(k % static_cast<size_t>(T - 1));
                           run_trial(s, trial, false);
                       },
                       config.threads);
    }

    ProtocolResult result;
    result.protocol = "velocity_segregated";
    result.report["protocol"] = "velocity_segregated";
    result.report["n_frames"] = n;
    result.report["config"] = config_to_json(config, p);
    result.report["surfaces"] = surfaces;
    json vel = json::object();
    for (size_t k = 0; k < velocities.size(); ++k) {
        vel[p.ds->data.recordings[k].meta] = velocities[k];
    }
    result.report["midpoint_velocities"] = vel;
    json trials_json = json::array();
    for (size_t s = 0; s < S; ++s) {
        for (size_t a = 0; a < arms.size(); ++a) {
            const std::string key = surfaces[s] + "/" + arms[a].name;
            aggregate_into(result, key, outcomes[s][a]);
            result.report["lambda"][key] = lambda_table[s][a];
            for (int t = 0; t < T; ++t) {
                trials_json.push_back(outcome_to_json(surfaces[s], arms[a].name, t,
                                                      outcomes[s][a][static_cast<size_t>(t)], p));
            }
        }
        result.report["excluded_recordings"][surfaces[s]] =
            std::vector<std::string>(excluded_ids[s].begin(), excluded_ids[s].end());
    }
    result.report["trials"] = trials_json;
    return result;
}

namespace {

std::vector<std::vector<double>> sample_patches(const Prepared& p,
                                                const std::vector<int>& indices,
                                                const SurfaceConfig& surface_config, int R,
                                                size_t target) {
    size_t total = 0;
    for (int idx : indices) {
        total += p.on[static_cast<size_t>(idx)].events.size();
    }
    const size_t stride = std::max<size_t>(1, total / std::max<size_t>(target, 1));
    std::vector<std::vector<double>> patches;
    size_t counter = 0;
    for (int idx : indices) {
        const Recording& rec = p.on[static_cast<size_t>(idx)];
        if (rec.events.empty()) {
            continue;
        }
        SurfaceConfig cfg = surface_config;
        cfg.dims = rec.dims;
        MemorySurface surface(cfg);
        for (const Event& ev : rec.events) {
            surface.absorb(ev);
            if (++counter % stride == 0 && patches.size() < target) {
                const int64_t now = cfg.basis == DecayBasis::kTime ? ev.t : ev.i;
                patches.push_back(surface.extract_patch(ev.x, ev.y, R, now));
            }
        }
        if (patches.size() >= target) {
            break;
        }
    }
    return patches;
}

}  // namespace

ProtocolResult run_feature_sweep(const SynthDataset& ds, const ExperimentConfig& config,
                                 const std::vector<int>& sizes, const std::vector<int>& counts,
                                 int sets) {
    config.validate();
    if (sizes.empty() || counts.empty() || sets < 1) {
        throw ConfigError("feature sweep needs sizes, counts and sets >= 1");
    }
    for (int size : sizes) {
        if (size < 1 || size % 2 == 0) {
            throw ConfigError("feature sizes must be odd (patches are centered)");
        }
    }
    const Prepared p = prepare(ds, config);
    const SurfaceConfig surface = p.surface("eis", config);
    const FrameBuildConfig fb{surface, config.tracker, config.pool};
    const ArmSpec linear_f = parse_arm("L-F");
    const ArmSpec linear_e = parse_arm("L-E");

    struct SetContext {
        std::vector<int> train_idx, test_idx;
        BuiltFrames train_e, test_e;
        FrameMatrix train_e_m, test_e_m;
        double baseline_acc = 0;
    };
    std::vector<SetContext> contexts(static_cast<size_t>(sets));
    std::vector<float> baseline_lambda(1, 0.f);

    // Per-set split and the no-feature linear baseline.
    for (int set = 0; set < sets; ++set) {
        SetContext& ctx = contexts[static_cast<size_t>(set)];
        const uint64_t set_seed = derive_seed(config.split_seed, 5000 + static_cast<uint64_t>(set));
        Rng rng(set_seed);
        std::tie(ctx.train_idx, ctx.test_idx) = split_recordings(p.labels, p.classes, rng);
        ctx.train_e = build_set(p, ctx.train_idx, fb, nullptr, true);
        ctx.test_e = build_set(p, ctx.test_idx, fb, nullptr, true);
        ctx.train_e_m = to_matrix(ctx.train_e.event_frames);
        ctx.test_e_m = to_matrix(ctx.test_e.event_frames);
        if (set == 0) {
            baseline_lambda[0] =
                select_lambda(linear_e, ctx.train_e_m, p.classes, config,
                              derive_seed(set_seed, 100), rng);
        }
        const ClassifierModel model = train_arm(linear_e, ctx.train_e_m, p.classes,
                                                baseline_lambda[0], config.elm_hidden, 0);
        ctx.baseline_acc =
            evaluate(model, ctx.test_e_m.X, ctx.test_e_m.labels, ctx.test_e_m.recording_ids,
                     p.classes)
                .per_frame_accuracy;
    }

    struct Cell {
        int size, count, kind;  // kind: 0 = learnt, 1 = random
        int set;
    };
    std::vector<Cell> cells;
    for (int size : sizes) {
        for (int count : counts) {
            for (int kind = 0; kind < 2; ++kind) {
                for (int set = 0; set < sets; ++set) {
                    cells.push_back({size, count, kind, set});
                }
            }
        }
    }
    std::vector<double> accuracy(cells.size(), 0.0);
    // Lambda per (size, count, kind), chosen on set 0.
    std::map<std::string, float> lambda_cache;
    std::mutex lambda_mutex;
    auto cell_key = [](int size, int count, int kind) {
        return std::to_string(size) + "x" + std::to_string(count) + "/" +
               (kind == 0 ? "learnt" : "random");
    };

    auto run_cell = [&](size_t ci) {
        const Cell& cell = cells[ci];
        const SetContext& ctx = contexts[static_cast<size_t>(cell.set)];
        const uint64_t set_seed =
            derive_seed(config.split_seed, 5000 + static_cast<uint64_t>(cell.set));
        const uint64_t cell_seed =
            derive_seed(set_seed, static_cast<uint64_t>(cell.size * 1000 + cell.count * 2 + cell.kind));
        Rng rng(cell_seed);

        SkanConfig sc = config.skan;
        sc.neuron_count = cell.count;
        sc.field_size = cell.size;
        sc.init_seed = derive_seed(cell_seed, 0xFEA7);
        std::optional<SkanNetwork> net;
        if (cell.kind == 0) {
            const auto flist =
                feature_training_list(p, ctx.train_idx, config.feature_train_per_class, rng);
            net.emplace(sc);
            train_features(flist, surface, *net);
        } else {
            net.emplace(random_features(cell.count, cell.size, sc.init_seed, sc));
            const auto patches = sample_patches(p, ctx.train_idx, surface, cell.size, 1000);
            calibrate_thresholds(*net, patches);
        }
        const BuiltFrames train_built = build_set(p, ctx.train_idx, fb, &*net, false);
        const BuiltFrames test_built = build_set(p, ctx.test_idx, fb, &*net, false);
        const FrameMatrix train = to_matrix(train_built.feature_frames);
        const FrameMatrix test = to_matrix(test_built.feature_frames);
        if (train.X.rows() == 0 || test.X.rows() == 0) {
            accuracy[ci] = 0.0;  // network never fired
            if (cell.set == 0) {
                const std::lock_guard<std::mutex> lock(lambda_mutex);
                lambda_cache[cell_key(cell.size, cell.count, cell.kind)] =
                    config.lambda_grid.front();
            }
            return;
        }
        float lambda;
        {
            const std::string key = cell_key(cell.size, cell.count, cell.kind);
            if (cell.set == 0) {
                lambda = select_lambda(linear_f, train, p.classes, config, 0, rng);
                const std::lock_guard<std::mutex> lock(lambda_mutex);
                lambda_cache[key] = lambda;
            } else {
                const std::lock_guard<std::mutex> lock(lambda_mutex);
                lambda = lambda_cache.at(key);
            }
        }
        ClassifierModel model;
        try {
            model = train_arm(linear_f, train, p.classes, lambda, config.elm_hidden, 0);
        } catch (const DataError&) {
            accuracy[ci] = 0.0;  // some class produced no feature frames at all
            return;
        }
        int hits = 0;
        const std::vector<int> preds = predict_frames(model, test.X);
        for (size_t r = 0; r < preds.size(); ++r) {
            hits += preds[r] == test.labels[r];
        }
        accuracy[ci] = static_cast<double>(hits) / static_cast<double>(preds.size());
    };

    // Set 0 first (fills the lambda cache), the rest in parallel.
    std::vector<size_t> first_wave, rest;
    for (size_t ci = 0; ci < cells.size(); ++ci) {
        (cells[ci].set == 0 ? first_wave : rest).push_back(ci);
    }
    parallel_tasks(first_wave.size(), [&](size_t k) { run_cell(first_wave[k]); }, config.threads);
    parallel_tasks(rest.size(), [&](size_t k) { run_cell(rest[k]); }, config.threads);

    ProtocolResult result;
    result.protocol = "feature_sweep";
    result.report["protocol"] = "feature_sweep";
    result.report["config"] = config_to_json(config, p);
    result.report["surface"] = "eis";
    result.report["sizes"] = sizes;
    result.report["counts"] = counts;
    result.report["sets"] = sets;
    std::vector<double> baselines;
    for (const SetContext& ctx : contexts) {
        baselines.push_back(ctx.baseline_acc);
    }
    result.report["baseline"] = {{"frame_mean", mean_of(baselines)},
                                 {"frame_std", std_of(baselines)},
                                 {"per_set", baselines},
                                 {"lambda", baseline_lambda[0]}};
    result.frame_acc["baseline/L-E"] = baselines;
    for (int size : sizes) {
        for (int count : counts) {
            for (int kind = 0; kind < 2; ++kind) {
                const std::string key = cell_key(size, count, kind);
                std::vector<double> accs;
                for (size_t ci = 0; ci < cells.size(); ++ci) {
                    if (cells[ci].size == size && cells[ci].count == count &&
                        cells[ci].kind == kind) {
                        accs.push_back(accuracy[ci]);
                    }
                }
                result.frame_acc[key] = accs;
                result.report["grid"][key] = {{"frame_mean", mean_of(accs)},
                                              {"frame_std", std_of(accs)},
                                              {"per_set", accs},
                                              {"lambda", lambda_cache.at(key)}};
            }
        }
    }
    return result;
}

BenchResult bench_throughput(const SynthDataset& ds, const std::string& surface_code,
                             const ExperimentConfig& config) {
    config.validate();
    const Prepared p = prepare(ds, config);
    const SurfaceConfig surface = p.surface(surface_code, config);
    int64_t total_events = 0;
    for (const Recording& rec : p.on) {
        total_events += static_cast<int64_t>(rec.events.size());
    }
    if (total_events == 0) {
        throw DataError("bench: dataset has no ON events");
    }

    // Small feature net so the full pipeline is representative.
    std::vector<const Recording*> flist;
    for (size_t k = 0; k < std::min<size_t>(4, p.on.size()); ++k) {
        flist.push_back(&p.on[k]);
    }
    SkanConfig sc = config.skan;
    sc.init_seed = derive_seed(config.split_seed, 0xBE);
    SkanNetwork net(sc);
    train_features(flist, surface, net);

    const FrameBuildConfig fb{surface, config.tracker, config.pool};
    using clock = std::chrono::steady_clock;

    auto absorb_pass = [&] {
        for (const Recording& rec : p.on) {
            SurfaceConfig cfg = surface;
            cfg.dims = rec.dims;
            MemorySurface s(cfg);
            for (const Event& ev : rec.events) {
                s.absorb(ev);
            }
        }
    };
    absorb_pass();  // warm-up

    const auto t0 = clock::now();
    absorb_pass();
    const auto t1 = clock::now();
    for (const Recording& rec : p.on) {
        track(rec, surface, config.tracker);
    }
    const auto t2 = clock::now();
    {
        SkanScratch scratch;
        for (size_t k = 0; k < p.on.size(); ++k) {
            build_frames(p.on[k], static_cast<int>(k), fb, &net, &scratch, true);
        }
    }
    const auto t3 = clock::now();

    const auto seconds = [](auto a, auto b) {
        return std::chrono::duration<double>(b - a).count();
    };
    BenchResult r;
    r.events = total_events;
    r.absorb_eps = static_cast<double>(total_events) / seconds(t0, t1);
    r.track_eps = static_cast<double>(total_events) / seconds(t1, t2);
    r.full_eps = static_cast<double>(total_events) / seconds(t2, t3);
    r.meta = {{"surface", surface_code},
              {"recordings", p.on.size()},
              {"hardware_concurrency", std::thread::hardware_concurrency()},
              {"skan_neurons", sc.neuron_count},
              {"skan_field", sc.field_size},
              {"code_version", kVersion}};
    return r;
}

void write_report(const std::filesystem::path& dir, const ProtocolResult& result) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "report.json");
        if (!out) {
            throw DataError("cannot write report.json under " + dir.string());
        }
        out << result.report.dump(1) << "\n";
    }
    std::ofstream csv(dir / "accuracy.csv");
    if (!csv) {
        throw DataError("cannot write accuracy.csv under " + dir.string());
    }
    csv << "protocol,key,trial,frame_accuracy,drop_accuracy\n";
    for (const auto& [key, series] : result.frame_acc) {
        const auto drop_it = result.drop_acc.find(key);
        for (size_t t = 0; t < series.size(); ++t) {
            csv << result.protocol << "," << key << "," << t << "," << series[t] << ",";
            if (drop_it != result.drop_acc.end() && t < drop_it->second.size()) {
                csv << drop_it->second[t];
            }
            csv << "\n";
        }
    }
}

void write_frames_csv(const std::filesystem::path& path, const std::vector<FeatureFrame>& frames,
                      const std::vector<std::string>& recording_ids) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    const size_t dim = frames.empty() ? 0 : frames.front().values.size();
    out << "recording_id,frame_index,label";
    for (size_t d = 0; d < dim; ++d) {
        out << ",v" << d;
    }
    out << "\n";
    for (const FeatureFrame& f : frames) {
        out << recording_ids.at(static_cast<size_t>(f.recording_index)) << "," << f.frame_index
            << "," << f.label;
        for (float v : f.values) {
            out << "," << v;
        }
        out << "\n";
    }
}

}  // namespace memsurf
