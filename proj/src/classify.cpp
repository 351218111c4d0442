#include "memsurf/classify.hpp"

#include <algorithm>
#include <map>

#include "memsurf/util.hpp"

namespace memsurf {

namespace {

void check_training_inputs(const Eigen::MatrixXf& X, const std::vector<int>& labels, int classes,
                           float lambda) {
    if (X.rows() == 0 || X.cols() == 0) {
        throw ConfigError("classifier training needs a non-empty design matrix");
    }
    if (static_cast<size_t>(X.rows()) != labels.size()) {
        throw ConfigError("labels/rows mismatch");
    }
    if (lambda <= 0) {
        throw ConfigError("ridge lambda must be > 0");
    }
    std::vector<int> seen(static_cast<size_t>(classes), 0);
    for (int label : labels) {
        if (label < 0 || label >= classes) {
            throw DataError("label out of range: " + std::to_string(label));
        }
        seen[static_cast<size_t>(label)] = 1;
    }
    for (int c = 0; c < classes; ++c) {
        if (!seen[static_cast<size_t>(c)]) {
            throw DataError("class " + std::to_string(c) + " has no training examples");
        }
    }
}

Eigen::MatrixXf ridge_solve(const Eigen::MatrixXf& X, const std::vector<int>& labels, int classes,
                            float lambda) {
    const Eigen::Index D = X.cols();
    Eigen::MatrixXf gram = X.transpose() * X;
    gram.diagonal().array() += lambda;
    Eigen::MatrixXf target = Eigen::MatrixXf::Zero(D, classes);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        target.col(labels[static_cast<size_t>(r)]) += X.row(r).transpose();
    }
    return gram.ldlt().solve(target);
}

Eigen::MatrixXf elm_hidden(const ClassifierModel& model, const Eigen::MatrixXf& X) {
    Eigen::MatrixXf h1(X.rows(), model.hidden + 1);
    if (model.hidden > 0) {
        Eigen::MatrixXf z = X * model.projection;
        z.rowwise() += model.proj_bias;
        h1.leftCols(model.hidden) = (1.0f + (-z.array()).exp()).inverse();
    }
    h1.col(model.hidden).setOnes();
    return h1;
}

}  // namespace

ClassifierModel train_linear(const Eigen::MatrixXf& X, const std::vector<int>& labels,
                             int classes, float lambda) {
    check_training_inputs(X, labels, classes, lambda);
    ClassifierModel model;
    model.kind = ClassifierModel::Kind::kLinear;
    model.classes = classes;
    model.lambda = lambda;
    model.weights = ridge_solve(X, labels, classes, lambda);
    return model;
}

ClassifierModel train_elm(const Eigen::MatrixXf& X, const std::vector<int>& labels, int classes,
                          int hidden, float lambda, uint64_t seed) {
    check_training_inputs(X, labels, classes, lambda);
    if (hidden < 0) {
        throw ConfigError("hidden size must be >= 0");
    }
    ClassifierModel model;
    model.kind = ClassifierModel::Kind::kElm;
    model.classes = classes;
    model.lambda = lambda;
    model.hidden = hidden;
    model.seed = seed;
    // Projection entries then biases, drawn column-major in a fixed order.
    Rng rng(seed);
    model.projection.resize(X.cols(), hidden);
    for (Eigen::Index c = 0; c < model.projection.cols(); ++c) {
        for (Eigen::Index r = 0; r < model.projection.rows(); ++r) {
            model.projection(r, c) = static_cast<float>(rng.range(-1.0, 1.0));
        }
    }
    model.proj_bias.resize(hidden);
    for (Eigen::Index c = 0; c < hidden; ++c) {
        model.proj_bias(c) = static_cast<float>(rng.range(-1.0, 1.0));
    }
    const Eigen::MatrixXf h1 = elm_hidden(model, X);
    model.weights = ridge_solve(h1, labels, classes, lambda);
    return model;
}

Eigen::MatrixXf class_scores(const ClassifierModel& model, const Eigen::MatrixXf& X) {
    if (model.kind == ClassifierModel::Kind::kLinear) {
        if (X.cols() != model.weights.rows()) {
            throw ConfigError("frame dimension mismatch: got " + std::to_string(X.cols()) +
                              ", model expects " + std::to_string(model.weights.rows()));
        }
        return X * model.weights;
    }
    if (X.cols() != model.projection.rows() && model.hidden > 0) {
        throw ConfigError("frame dimension mismatch for ELM projection");
    }
    return elm_hidden(model, X) * model.weights;
}

namespace {
int argmax_row(const Eigen::MatrixXf& scores, Eigen::Index row) {
    int best = 0;
    for (int c = 1; c < scores.cols(); ++c) {
        if (scores(row, c) > scores(row, best)) {
            best = c;
        }
    }
    return best;
}
}  // namespace

int predict_frame(const ClassifierModel& model, std::span<const float> frame) {
    Eigen::MatrixXf x(1, static_cast<Eigen::Index>(frame.size()));
    for (size_t k = 0; k < frame.size(); ++k) {
        x(0, static_cast<Eigen::Index>(k)) = frame[k];
    }
    const Eigen::MatrixXf scores = class_scores(model, x);
    return argmax_row(scores, 0);
}

std::vector<int> predict_frames(const ClassifierModel& model, const Eigen::MatrixXf& X) {
    const Eigen::MatrixXf scores = class_scores(model, X);
    std::vector<int> preds(static_cast<size_t>(X.rows()));
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        preds[static_cast<size_t>(r)] = argmax_row(scores, r);
    }
    return preds;
}

int majority_vote(std::span<const int> votes, int classes) {
    if (votes.empty()) {
        throw DataError("majority vote over zero frames");
    }
    std::vector<int> counts(static_cast<size_t>(classes), 0);
    for (int v : votes) {
        if (v < 0 || v >= classes) {
            throw DataError("vote out of range");
        }
        ++counts[static_cast<size_t>(v)];
    }
    int best = 0;
    for (int c = 1; c < classes; ++c) {
        if (counts[static_cast<size_t>(c)] > counts[static_cast<size_t>(best)]) {
            best = c;
        }
    }
    return best;
}

Evaluation evaluate(const ClassifierModel& model, const Eigen::MatrixXf& X,
                    const std::vector<int>& labels, const std::vector<int>& recording_ids,
                    int classes) {
    if (X.rows() == 0) {
        throw DataError("evaluate: empty test set");
    }
    if (labels.size() != static_cast<size_t>(X.rows()) || recording_ids.size() != labels.size()) {
        throw ConfigError("evaluate: labels/recording_ids size mismatch");
    }
    const std::vector<int> preds = predict_frames(model, X);

    Evaluation eval;
    eval.confusion_frames = Eigen::MatrixXd::Zero(classes, classes);
    eval.confusion_drops = Eigen::MatrixXd::Zero(classes, classes);
    eval.frames = static_cast<int>(X.rows());

    int frame_hits = 0;
    std::map<int, std::vector<size_t>> groups;
    for (size_t r = 0; r < preds.size(); ++r) {
        if (preds[r] == labels[r]) {
            ++frame_hits;
        }
        eval.confusion_frames(labels[r], preds[r]) += 1.0;
        groups[recording_ids[r]].push_back(r);
    }
    eval.per_frame_accuracy = static_cast<double>(frame_hits) / static_cast<double>(preds.size());

    int drop_hits = 0;
    for (const auto& [rec_id, rows] : groups) {
        std::vector<int> votes;
        votes.reserve(rows.size());
        for (size_t r : rows) {
            votes.push_back(preds[r]);
        }
        const int label = labels[rows.front()];
        const int pred = majority_vote(votes, classes);
        eval.confusion_drops(label, pred) += 1.0;
        if (pred == label) {
            ++drop_hits;
        } else {
            eval.misclassified_recordings.push_back(rec_id);
        }
        ++eval.drops;
    }
    eval.per_drop_accuracy = static_cast<double>(drop_hits) / static_cast<double>(eval.drops);
    return eval;
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& counts) {
    Eigen::MatrixXd out = counts;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double sum = out.row(r).sum();
        if (sum > 0) {
            out.row(r) /= sum;
        }
    }
    return out;
}

}  // namespace memsurf
