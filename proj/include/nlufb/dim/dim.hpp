#pragma once
// Defect Identification Model: a binary classifier over turns, surrogate
// trained on the dissatisfaction labels, thresholded with a binary search
// that targets a prediction-accuracy floor, and used to pick the target
// defects worth correcting. Includes the naive signal-grouping baseline.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nlufb/core/types.hpp"
#include "nlufb/nn/model.hpp"
#include "nlufb/nn/train.hpp"

namespace nlufb::dim {

struct DimFeatureConfig {
    // Context keys exposed as categorical features (as "ctx_<key>").
    std::vector<std::string> context_keys = {"device_has_screen"};
};

// Fraction of the interpretation's slot-value tokens present in the
// utterance; 0 when the interpretation carries no slot values. A cheap
// match signal between what the user said and what NLU claims they meant.
double slot_value_coverage(std::span<const std::string> utterance,
                           const core::Interpretation& p);

// Turn features: utterance tokens plus top-hypothesis slot types/values as
// sequences; top domain/intent and context flags as categoricals; top-1
// confidence, confidence margin, hypothesis count, and the top
// interpretation's slot-value coverage as numericals. Response signals and
// the oracle interpretation are never read.
nn::RawFeatures raw_dim_features(const core::Turn& t, const DimFeatureConfig& cfg = {});

// Encoded against the model's vocabularies (unknown tokens map to OOV).
nn::FeatureBundle build_dim_features(const core::Turn& t, const nn::Model& model,
                                     const DimFeatureConfig& cfg = {});

struct DimHyperparams {
    int epochs = 8;
    int batch_size = 64;
    double learning_rate = 1e-3;
    int hidden_size = 32;
    int seq_dim = 16;
    int cat_dim = 8;
    bool class_weighting = true;
    std::pair<int, int> split_ratio = {9, 1};
    DimFeatureConfig features;
};

struct DimTrainResult {
    nn::Model model;
    core::Dataset valid;  // held out from training, used for threshold search
};

// Splits by session (9:1 by default), trains on the defect labels, and
// returns the model plus the held-out validation split. Throws when the
// input is not annotated or the training split has no defects.
DimTrainResult train_dim(const core::Dataset& d_live, const DimHyperparams& hp, uint64_t seed);

// Defect-probability score for one turn.
double score_turn(const nn::Model& model, const core::Turn& t, const DimFeatureConfig& cfg = {});

// Fraction of the set that is labeled defective; empty set counts as 0 so
// an over-tight threshold reads as failing accuracy.
double prediction_accuracy(std::span<const core::Turn> pred_set);

struct ThresSearchResult {
    double tau = 0.0;
    double achieved_accuracy = 0.0;  // accuracy at the final probe
    int iterations = 0;
};

// Binary search on [0,1]: probe tau at the midpoint, measure prediction
// accuracy of {score > tau} on the validation set, raise the lower bound
// when accuracy misses lambda and lower the upper bound otherwise; stop
// once the interval is within epsilon.
ThresSearchResult thres_search(const nn::Model& model, const core::Dataset& d_valid, double lambda,
                               double epsilon, const DimFeatureConfig& cfg = {});

// Same search over precomputed scores paired with defect labels.
ThresSearchResult thres_search_scored(std::span<const double> scores,
                                      std::span<const int> defect_labels, double lambda,
                                      double epsilon);

// All turns of the input scoring strictly above tau.
core::Dataset select_targets(const nn::Model& model, const core::Dataset& d_live, double tau,
                             const DimFeatureConfig& cfg = {});

// Groups turns by exact match on the requested signals and returns every
// turn of the groups whose defect ratio exceeds ratio_threshold.
// Supported signal keys: "domain", "intent", "slots", "utterance".
core::Dataset naive_group_baseline(const core::Dataset& d_live,
                                   const std::vector<std::string>& signal_keys,
                                   double ratio_threshold);

}  // namespace nlufb::dim
