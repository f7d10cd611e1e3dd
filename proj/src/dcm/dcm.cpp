#include "nlufb/dcm/dcm.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <stdexcept>

#include "nlufb/core/rng.hpp"

namespace nlufb::dcm {

using core::Interpretation;
using core::InterpretationCatalog;
using core::Rng;
using core::Session;
using core::Turn;

std::vector<HighValuePair> extract_high_value_pairs(std::span<const Session> sessions) {
    std::vector<HighValuePair> pairs;
    for (const Session& s : sessions) {
        std::map<std::string, const Turn*> by_id;
        for (const Turn& t : s.turns) by_id[t.turn_id] = &t;
        for (const Turn& t : s.turns) {
            if (!t.rephrase_of.has_value()) continue;
            if (!t.defect_label.has_value() || *t.defect_label) continue;  // (b): non-defective
            auto it = by_id.find(*t.rephrase_of);
            if (it == by_id.end()) continue;
            const Turn& antecedent = *it->second;
            if (!antecedent.defect_label.has_value() || !*antecedent.defect_label)
                continue;  // (a): the rephrased turn is a defect
            pairs.push_back({antecedent, t});
        }
    }
    return pairs;
}

std::vector<DcmInstance> generate_dcm_training_data(std::span<const HighValuePair> pairs, int k,
                                                    int q, const InterpretationCatalog& catalog,
                                                    uint64_t seed) {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (q < 0) throw std::invalid_argument("q must be >= 0");
    if (catalog.entries.empty()) throw std::invalid_argument("interpretation catalog is empty");

    std::vector<DcmInstance> instances;
    long starved_pairs = 0;
    for (const HighValuePair& pair : pairs) {
        const Turn& rephrase = pair.rephrase_turn;
        if (rephrase.hypotheses.empty())
            throw std::invalid_argument("rephrase turn has no hypotheses: " + rephrase.turn_id);

        size_t kbest = std::min(rephrase.hypotheses.size(), static_cast<size_t>(k));
        const Interpretation& positive = rephrase.hypotheses.front().interpretation;
        instances.push_back({pair.defect_turn, positive, 1});
        for (size_t i = 1; i < kbest; ++i) {
            const Interpretation& cand = rephrase.hypotheses[i].interpretation;
            if (cand == positive) continue;
            instances.push_back({pair.defect_turn, cand, 0});
        }

        // Noise negatives: uniform over the catalog minus the k-best.
        Rng rng(core::mix_seed(seed, core::fnv1a64(pair.defect_turn.turn_id)));
        std::vector<const Interpretation*> eligible;
        for (const Interpretation& p : catalog.entries) {
            bool in_kbest = false;
            for (size_t i = 0; i < kbest; ++i)
                in_kbest = in_kbest || p == rephrase.hypotheses[i].interpretation;
            if (!in_kbest) eligible.push_back(&p);
        }
        if (static_cast<int>(eligible.size()) < q) ++starved_pairs;
        rng.shuffle(eligible);
        size_t take = std::min(eligible.size(), static_cast<size_t>(q));
        for (size_t i = 0; i < take; ++i) {
            instances.push_back({pair.defect_turn, *eligible[i], 0});
        }
    }
    if (starved_pairs > 0) {
        std::cerr << "warning: catalog too small for q=" << q << " noise negatives on "
                  << starved_pairs << " pair(s); emitted fewer\n";
    }
    return instances;
}

nn::RawFeatures raw_candidate_features(const Interpretation& p) {
    nn::RawFeatures raw;
    raw.categorical["cand_domain"] = p.domain;
    raw.categorical["cand_intent"] = p.intent;
    std::vector<std::string> slot_types;
    std::vector<std::string> slot_values;
    for (const core::Slot& s : p.canonical_slots()) {
        slot_types.push_back(s.type);
        for (const std::string& tok : core::tokenize(s.value)) slot_values.push_back(tok);
    }
    raw.sequential["cand_slot_types"] = std::move(slot_types);
    raw.sequential["cand_slot_values"] = std::move(slot_values);
    return raw;
}

namespace {

nn::RawFeatures instance_raw(const Turn& t, const Interpretation& cand,
                             const dim::DimFeatureConfig& cfg) {
    nn::RawFeatures raw = dim::raw_dim_features(t, cfg);
    raw.merge(raw_candidate_features(cand));
    nn::RawFeatures match;
    match.numerical["cand_utt_overlap"] = {dim::slot_value_coverage(t.utterance, cand)};
    raw.merge(match);
    return raw;
}

}  // namespace

nn::Model train_dcm(std::span<const DcmInstance> instances, const DcmHyperparams& hp,
                    uint64_t seed) {
    if (instances.empty()) throw std::invalid_argument("no training instances");
    bool has_pos = false, has_neg = false;
    for (const DcmInstance& inst : instances) {
        (inst.label == 1 ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg)
        throw std::runtime_error("correction training data contains a single class");

    nn::ArchBuilder builder(hp.seq_dim, hp.cat_dim, hp.hidden_size);
    std::vector<nn::RawFeatures> raws;
    raws.reserve(instances.size());
    for (const DcmInstance& inst : instances) {
        raws.push_back(instance_raw(inst.turn, inst.candidate, hp.turn_features));
        builder.observe(raws.back());
    }

    nn::Model model = nn::init_model(builder.arch(), seed);
    model.vocabs = builder.vocabs();

    std::vector<nn::Sample> samples;
    samples.reserve(raws.size());
    for (size_t i = 0; i < raws.size(); ++i) {
        samples.push_back({model.encode(raws[i]), instances[i].label});
    }

    nn::TrainConfig tc;
    tc.epochs = hp.epochs;
    tc.batch_size = hp.batch_size;
    tc.learning_rate = hp.learning_rate;
    tc.class_weighting = hp.class_weighting;
    tc.seed = seed;
    return nn::train(std::move(model), samples, tc);
}

double score_candidate(const nn::Model& model, const Turn& t, const Interpretation& candidate,
                       const dim::DimFeatureConfig& cfg) {
    return model.predict(model.encode(instance_raw(t, candidate, cfg)));
}

Interpretation correct_with_scores(const Turn& t, std::span<const double> scores) {
    if (t.hypotheses.empty()) throw std::invalid_argument("turn has no hypotheses: " + t.turn_id);
    if (scores.size() != t.hypotheses.size())
        throw std::invalid_argument("one score per hypothesis required");
    size_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;  // ties keep the lower rank
    }
    return t.hypotheses[best].interpretation;
}

Interpretation correct(const Turn& t, const nn::Model& model, const dim::DimFeatureConfig& cfg) {
    std::vector<double> scores;
    scores.reserve(t.hypotheses.size());
    for (const core::Hypothesis& h : t.hypotheses)
        scores.push_back(score_candidate(model, t, h.interpretation, cfg));
    return correct_with_scores(t, scores);
}

}  // namespace nlufb::dcm
