#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "memsurf/types.hpp"

namespace memsurf {

/// One-vs-all ridge readout, optionally behind a fixed random sigmoid
/// projection (ELM). Predictions are argmax over class scores with ties
/// going to the lowest class index.
struct ClassifierModel {
    enum class Kind { kLinear, kElm };
    Kind kind = Kind::kLinear;
    int classes = 0;
    float lambda = 0;
    Eigen::MatrixXf weights;  // D x C (linear) or (hidden+1) x C (ELM readout)

    // ELM projection, fixed at training time.
    int hidden = 0;
    uint64_t seed = 0;
    Eigen::MatrixXf projection;   // D x hidden, entries uniform in [-1, 1]
    Eigen::RowVectorXf proj_bias; // 1 x hidden
};

/// W = argmin |XW - Y|^2 + lambda |W|^2 via normal equations, Y one-hot.
/// Requires lambda > 0 and at least one example of every class.
ClassifierModel train_linear(const Eigen::MatrixXf& X, const std::vector<int>& labels,
                             int classes, float lambda);

/// Hidden layer g(X A + b) with seeded uniform weights and logistic g, plus
/// an intercept column, ridge-trained readout. hidden = 0 degenerates to an
/// intercept-only (majority class) model.
ClassifierModel train_elm(const Eigen::MatrixXf& X, const std::vector<int>& labels, int classes,
                          int hidden, float lambda, uint64_t seed);

Eigen::MatrixXf class_scores(const ClassifierModel& model, const Eigen::MatrixXf& X);

int predict_frame(const ClassifierModel& model, std::span<const float> frame);

std::vector<int> predict_frames(const ClassifierModel& model, const Eigen::MatrixXf& X);

/// Majority vote with ties to the lowest class index.
int majority_vote(std::span<const int> votes, int classes);

struct Evaluation {
    double per_frame_accuracy = 0;
    double per_drop_accuracy = 0;
    Eigen::MatrixXd confusion_frames;  // raw counts, row = true class
    Eigen::MatrixXd confusion_drops;
    std::vector<int> misclassified_recordings;
    int frames = 0;
    int drops = 0;
};

/// Scores per-frame and per-drop (majority over each recording's frames).
/// recording_ids group rows into drops; every row of a drop shares a label.
Evaluation evaluate(const ClassifierModel& model, const Eigen::MatrixXf& X,
                    const std::vector<int>& labels, const std::vector<int>& recording_ids,
                    int classes);

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& counts);

}  // namespace memsurf
