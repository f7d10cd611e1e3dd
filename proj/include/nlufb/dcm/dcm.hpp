#pragma once
// Defect Correction Model: mines (defect, non-defective rephrase) pairs,
// turns them into (turn, candidate interpretation, label) instances with
// catalog noise negatives, trains a pairwise scorer, and assigns the
// best-scoring k-best candidate as the corrected interpretation.

#include <cstdint>
#include <span>
#include <vector>

#include "nlufb/core/types.hpp"
#include "nlufb/dim/dim.hpp"
#include "nlufb/nn/model.hpp"

namespace nlufb::dcm {

struct HighValuePair {
    core::Turn defect_turn;    // labeled defective
    core::Turn rephrase_turn;  // non-defective, rephrase_of == defect_turn.turn_id
};

// All and only the pairs where a defective turn is rephrased by a later
// non-defective turn in the same session.
std::vector<HighValuePair> extract_high_value_pairs(std::span<const core::Session> sessions);

struct DcmInstance {
    core::Turn turn;                // the defect turn
    core::Interpretation candidate;
    int label = 0;                  // 1 iff candidate is the correct interpretation
};

// Per pair: one positive (the rephrase's top-1 interpretation), up to k-1
// negatives from the rephrase's k-best, and up to q catalog-sampled noise
// negatives guaranteed absent from that k-best. Deterministic: the
// per-pair stream is derived from (seed, defect turn_id), so generation is
// order-independent. Warns to stderr when the catalog cannot supply q
// noise candidates.
std::vector<DcmInstance> generate_dcm_training_data(std::span<const HighValuePair> pairs, int k,
                                                    int q,
                                                    const core::InterpretationCatalog& catalog,
                                                    uint64_t seed);

// Candidate-side features: domain/intent categoricals and the slot-type
// sequence, under "cand_"-prefixed names.
nn::RawFeatures raw_candidate_features(const core::Interpretation& p);

struct DcmHyperparams {
    int epochs = 10;
    int batch_size = 64;
    double learning_rate = 1e-3;
    int hidden_size = 32;
    int seq_dim = 16;
    int cat_dim = 8;
    bool class_weighting = true;
    dim::DimFeatureConfig turn_features;
};

// Binary classifier over (turn features, candidate features). Throws when
// only one label is present.
nn::Model train_dcm(std::span<const DcmInstance> instances, const DcmHyperparams& hp,
                    uint64_t seed);

// Score for one (turn, candidate) input.
double score_candidate(const nn::Model& model, const core::Turn& t,
                       const core::Interpretation& candidate,
                       const dim::DimFeatureConfig& cfg = {});

// Argmax-scoring interpretation from the turn's own k-best; ties break
// toward the lowest original rank.
core::Interpretation correct(const core::Turn& t, const nn::Model& model,
                             const dim::DimFeatureConfig& cfg = {});

// Tie-break logic on externally supplied per-hypothesis scores.
core::Interpretation correct_with_scores(const core::Turn& t, std::span<const double> scores);

}  // namespace nlufb::dcm
