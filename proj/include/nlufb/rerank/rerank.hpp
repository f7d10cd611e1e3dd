#pragma once
// Curated-supervision assembly and the final re-ranking layer: target
// defects get the corrected interpretation as their label, everything else
// passes through, and a pointwise scorer is trained to reproduce the
// resulting top-1 choices. Also houses the oracle-based shadow evaluator.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "nlufb/core/types.hpp"
#include "nlufb/dcm/dcm.hpp"
#include "nlufb/nn/model.hpp"

namespace nlufb::rerank {

enum class Origin { pass_through, corrected };

std::string to_string(Origin o);
Origin origin_from_string(const std::string& s);

struct SupervisionRecord {
    core::Turn turn;
    core::Interpretation gold;
    Origin origin = Origin::pass_through;
};

// One record per sampled turn: target defects are labeled by the
// correction model, the rest keep their top-ranked interpretation.
// Requires d_target to be a subset of d_sample (by turn_id).
std::vector<SupervisionRecord> build_curated_dataset(const core::Dataset& d_sample,
                                                     const core::Dataset& d_target,
                                                     const nn::Model& dcm_model,
                                                     const dim::DimFeatureConfig& cfg = {});

struct RerankHyperparams {
    int epochs = 10;
    int batch_size = 256;
    double learning_rate = 1e-3;
    int hidden_size = 16;
    int seq_dim = 8;
    int cat_dim = 8;
    bool class_weighting = true;
    dim::DimFeatureConfig turn_features;
};

// Pointwise scorer: per record, each hypothesis becomes one instance with
// label 1 iff its interpretation equals the gold. Records whose gold is
// missing from the hypothesis list are skipped with a warning.
nn::Model train_reranker(std::span<const SupervisionRecord> records, const RerankHyperparams& hp,
                         uint64_t seed);

double score_hypothesis(const nn::Model& model, const core::Turn& t, const core::Hypothesis& h,
                        const dim::DimFeatureConfig& cfg = {});

// Same hypothesis set re-ordered by descending score (ties keep original
// rank order); ranks renumbered, per-hypothesis confidences preserved.
std::vector<core::Hypothesis> rerank(const core::Turn& t, const nn::Model& model,
                                     const dim::DimFeatureConfig& cfg = {});
std::vector<core::Hypothesis> rerank_with_scores(const core::Turn& t,
                                                 std::span<const double> scores);

struct DomainCounts {
    long total = 0;
    long win = 0;
    long loss = 0;
    long tie = 0;

    long delta1() const { return win - loss; }
    double delta2() const { return total == 0 ? 0.0 : static_cast<double>(delta1()) / total; }
};

struct EvalReport {
    std::map<std::string, DomainCounts> per_domain;  // keyed by oracle domain
    DomainCounts overall;
    double changed_fraction = 0.0;  // re-ranked top-1 != baseline top-1
    long delta_turns = 0;
    // Fraction of delta turns whose top-1 misses the oracle, before
    // (baseline) and after (re-ranked).
    double defect_proxy_before = 0.0;
    double defect_proxy_after = 0.0;
};

using HypothesisScorer = std::function<std::vector<double>(const core::Turn&)>;

// Per turn: win iff the re-ranked top-1 matches the oracle and the
// baseline does not, loss for the converse, tie otherwise. Requires
// oracle interpretations (simulator traffic).
EvalReport evaluate_shadow(std::span<const core::Session> sessions, const nn::Model& model,
                           const dim::DimFeatureConfig& cfg = {});
EvalReport evaluate_shadow_with(std::span<const core::Session> sessions,
                                const HypothesisScorer& scorer);

struct AttributionCounts {
    long total = 0;
    long seeded_confusion = 0;  // top-1 differs from the oracle
    long nuisance = 0;          // top-1 matches the oracle

    double seeded_fraction() const {
        return total == 0 ? 0.0 : static_cast<double>(seeded_confusion) / total;
    }
};

struct AttributionReport {
    AttributionCounts defects;
    AttributionCounts targets;
};

// Classifies each turn of both sets against the oracle; the desk-scale
// analogue of error-attribution annotation. Throws when the oracle is
// missing.
AttributionReport error_attribution_report(const core::Dataset& defects,
                                           const core::Dataset& targets);

// Aligned plain-text table: per-domain and overall rows with
// Total/Win/Loss/Tie and the win-loss deltas.
std::string format_eval_table(const EvalReport& report);

nlohmann::ordered_json eval_report_to_json(const EvalReport& report);
nlohmann::ordered_json attribution_to_json(const AttributionReport& report);

// Curated-record persistence (line-delimited JSON).
void write_curated(std::span<const SupervisionRecord> records, const std::filesystem::path& path);
std::vector<SupervisionRecord> read_curated(const std::filesystem::path& path);

}  // namespace nlufb::rerank
