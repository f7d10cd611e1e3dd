#pragma once
// Deterministic synthetic-traffic generator. Produces desk-scale session
// logs with oracle interpretations, seeded systematic NLU confusions, and
// scripted dissatisfaction/rephrase behavior, standing in for production
// traffic during development and verification.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nlufb/core/types.hpp"

namespace nlufb::simgen {

// One concrete request pattern: a fixed interpretation plus paraphrase
// templates. Templates within one entry stay token-similar (so the
// rephrase detector can link them) and disjoint across entries.
struct CatalogEntry {
    std::string id;  // utterance-group id, e.g. "music.play_ottr"
    std::string domain;
    std::string intent;
    std::vector<core::Slot> slots;
    std::vector<std::string> templates;  // >= 2 pre-filled paraphrases

    core::Interpretation interpretation() const { return {domain, intent, slots}; }
};

// When a turn's goal matches `trigger`, NLU serves `wrong` as top-1 with
// probability `rate` and buries `correct` at a lower rank.
struct ConfusionRule {
    std::string trigger;  // CatalogEntry id
    core::Interpretation wrong;
    core::Interpretation correct;
    double rate = 0.0;
};

struct BehaviorConfig {
    double barge_in_prob_on_error = 0.95;    // beta
    double rephrase_prob_after_defect = 0.8; // gamma
    double random_defect_noise_prob = 0.05;  // eta: nuisance barge-ins
    // Probability that a triggered group's confusable interpretation shows
    // up in the k-best even when top-1 is correct.
    double confusable_in_kbest_prob = 0.8;
};

struct SimConfig {
    uint64_t seed = 1;
    int n_sessions = 100;
    std::vector<CatalogEntry> catalog;
    std::vector<ConfusionRule> rules;
    BehaviorConfig behavior;
    int k_best = 5;
    int min_goals_per_session = 1;
    int max_goals_per_session = 4;
};

// Throws std::invalid_argument on: k_best < 2, empty catalog, fewer than
// two templates per entry, probabilities outside [0,1], or a rule whose
// correct interpretation is not in the catalog.
void validate(const SimConfig& cfg);

// Ground truth the generator knows but deliberately leaves out of the
// logs (rephrase links are for the annotator to find).
struct SimTrace {
    std::vector<std::pair<std::string, std::string>> rephrase_pairs;  // (antecedent, rephrase)
    std::set<std::string> confused_turn_ids;  // turns served a wrong top-1
    std::map<std::string, std::string> turn_group;  // turn_id -> CatalogEntry id
};

// Deterministic given cfg.seed. Every turn carries oracle_interpretation,
// and the oracle is always reachable within the k-best.
std::vector<core::Session> generate_traffic(const SimConfig& cfg, SimTrace* trace = nullptr);

struct GroupStats {
    long total = 0;
    long top1_correct = 0;
    long top1_wrong = 0;
};

struct OracleSummary {
    std::map<std::string, GroupStats> per_group;  // keyed by oracle interpretation
    long total_turns = 0;
    long defect_signals = 0;  // barge-in or early termination
    double top1_accuracy = 0.0;
    double defect_signal_rate = 0.0;
};

// Per-utterance-group top-1 accuracy and the overall defect-signal rate.
// Throws when a turn is missing its oracle interpretation.
OracleSummary oracle_report(std::span<const core::Session> sessions);

// The reference catalog and rules used by the desk-scale configs.
std::vector<CatalogEntry> default_catalog();
std::vector<ConfusionRule> default_rules();
SimConfig default_sim_config();

}  // namespace nlufb::simgen
