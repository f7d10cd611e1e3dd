#pragma once
// Binary cross-entropy training with Adam, plus the finite-difference
// gradient checker used to verify the backward pass.

#include <cstdint>
#include <span>
#include <vector>

#include "nlufb/nn/model.hpp"

namespace nlufb::nn {

struct Sample {
    FeatureBundle features;
    int label = 0;  // 0 or 1
};

struct TrainConfig {
    int epochs = 10;
    int batch_size = 256;
    double learning_rate = 1e-3;
    bool class_weighting = true;   // upweights the positive class by neg/pos
    double max_pos_weight = 20.0;
    uint64_t seed = 1;
};

// Weighted BCE for one sample (weight applied to the positive class).
double sample_loss(const Model& model, const Sample& sample, double pos_weight);

// Loss plus analytic gradients accumulated into `grads` (same keys/shapes
// as model.params; missing entries are created).
double sample_loss_and_grad(const Model& model, const Sample& sample, double pos_weight,
                            ParamMap& grads);

// Trains in place, recording the mean per-sample loss of every epoch in
// model.epoch_losses. Deterministic for a given config. Throws when the
// label set is degenerate and class weighting is off, or if the loss goes
// non-finite.
Model train(Model model, std::span<const Sample> samples, const TrainConfig& cfg);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    long params_checked = 0;
};

// Central finite differences with step `epsilon` against the analytic
// gradient, over every parameter of the model. Relative error uses a
// floor of 1e-2 on the denominator so zero-gradient parameters compare
// cleanly.
GradCheckResult grad_check(const Model& model, const Sample& sample, double epsilon,
                           double pos_weight = 1.0);

}  // namespace nlufb::nn
